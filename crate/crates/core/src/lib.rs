//! Context-specific interaction models and split models for multidimensional contingency
//! tables.
//!
//! The crate covers the whole workflow: dense tables ([`table`]), undirected interaction
//! graphs ([`graph`]), generating classes with context-restricted generators ([`csi`]),
//! maximum likelihood fitting by iterative proportional scaling ([`fit`]), split trees and
//! split graphs ([`split`]) and automated model search ([`select`]).

pub mod csi;
pub mod datasets;
pub mod error;
pub mod fit;
pub mod graph;
mod linalg;
pub mod report;
pub mod select;
pub mod split;
mod syntax;
pub mod table;

pub use csi::{Generator, GeneratingClass};
pub use error::{Error, Result};
pub use fit::{FitResult, TestResult};
pub use graph::{Edge, Graph};
pub use split::{SplitGraph, SplitTree};
pub use table::{Cell, ContingencyTable, Context, IndexConvention, TableSchema, VarSet, VariableSpec};
