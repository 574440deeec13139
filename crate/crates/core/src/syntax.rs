//! Tokenizing variable-name runs such as `ABD` or `X1 X2` inside bracketed clique lists.

use crate::error::{Error, Result};

/// Splits a run of variable names.
///
/// With a vocabulary the run is matched greedily against known names (longest first), so
/// multi-character names may be concatenated. Without one, whitespace- or comma-separated
/// runs are split on separators and anything else is read one character per name.
pub(crate) fn split_names(run: &str, vocabulary: Option<&[String]>, offset: usize) -> Result<Vec<String>> {
    let run_trim = run.trim();
    if run_trim.is_empty() {
        return Ok(Vec::new());
    }
    match vocabulary {
        Some(vocab) => {
            let mut sorted: Vec<&String> = vocab.iter().collect();
            sorted.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
            let mut out = Vec::new();
            let mut rest = run;
            let mut pos = offset;
            while !rest.is_empty() {
                let trimmed = rest.trim_start_matches(|c: char| c.is_whitespace() || c == ',');
                pos += rest.len() - trimmed.len();
                rest = trimmed;
                if rest.is_empty() {
                    break;
                }
                let name = sorted
                    .iter()
                    .find(|n| rest.starts_with(n.as_str()))
                    .ok_or_else(|| Error::parse(format!("offset {pos}"), format!("unknown variable at {rest:?}")))?;
                out.push((*name).clone());
                rest = &rest[name.len()..];
                pos += name.len();
            }
            Ok(out)
        }
        None => {
            if run_trim.contains(|c: char| c.is_whitespace() || c == ',') {
                Ok(run_trim
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect())
            } else {
                Ok(run_trim.chars().map(String::from).collect())
            }
        }
    }
}

/// Joins names for display: concatenated when all are single characters.
pub(crate) fn join_names<'a, I: IntoIterator<Item = &'a String>>(names: I) -> String {
    let names: Vec<&String> = names.into_iter().collect();
    if names.iter().all(|n| n.chars().count() == 1) {
        names.iter().map(|s| s.as_str()).collect()
    } else {
        names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Reads `[..][..]` groups, returning each group's inner text and byte offset.
pub(crate) fn bracket_groups(text: &str) -> Result<Vec<(String, usize)>> {
    let mut groups = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '[' => {
                let start = i + 1;
                let mut end = None;
                for (j, d) in chars.by_ref() {
                    if d == '[' {
                        return Err(Error::parse(format!("offset {j}"), "nested '[' in clique list"));
                    }
                    if d == ']' {
                        end = Some(j);
                        break;
                    }
                }
                let end = end.ok_or_else(|| Error::parse(format!("offset {i}"), "unclosed '['"))?;
                groups.push((text[start..end].to_string(), start));
            }
            c if c.is_whitespace() => {}
            other => {
                return Err(Error::parse(format!("offset {i}"), format!("unexpected character {other:?}")));
            }
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_single_characters_and_separated_names() {
        assert_eq!(split_names("ABD", None, 0).unwrap(), vec!["A", "B", "D"]);
        assert_eq!(split_names("x1 y2", None, 0).unwrap(), vec!["x1", "y2"]);
        let vocab = vec!["Sex".to_string(), "S".to_string(), "Age".to_string()];
        assert_eq!(split_names("SexAgeS", Some(&vocab), 0).unwrap(), vec!["Sex", "Age", "S"]);
        assert!(split_names("Q", Some(&vocab), 0).is_err());
    }

    #[test]
    fn bracket_groups_report_offsets() {
        let g = bracket_groups("[AB] [CD]").unwrap();
        assert_eq!(g, vec![("AB".to_string(), 1), ("CD".to_string(), 6)]);
        assert!(bracket_groups("[AB").is_err());
        assert!(bracket_groups("AB").is_err());
    }
}
