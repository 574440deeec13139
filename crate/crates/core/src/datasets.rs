//! Bundled example data.

use crate::table::ContingencyTable;

/// JSON document of the women-and-mathematics survey: six binary variables, N = 1190.
pub const WAM_JSON: &str = include_str!("../data/wam.json");

/// The women-and-mathematics survey table.
///
/// A: lecture attendance, B: sex, C: school type, D: attitude ("I'll need mathematics"),
/// E: subject preference, F: future plans.
pub fn wam() -> ContingencyTable {
    ContingencyTable::from_json(WAM_JSON).expect("bundled table is valid")
}
