//! A small, deterministic evaluator for the single-table SELECT subset used by
//! the benchmark: WHERE, GROUP BY, ORDER BY, DISTINCT, aggregates and
//! uncorrelated `IN (SELECT ...)` subqueries.
//!
//! Numbers are exact. `AVG` and decimal arithmetic produce rationals, which
//! are rendered with two decimals when they are not integral.

pub mod ast;
mod error;
mod exec;
mod lexer;
mod parser;
mod table;
mod value;

pub use error::SqlError;
pub use exec::like_match;
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::parse;
pub use table::{Column, ColumnType, Database, ResultTable, Table};
pub use value::{exact_decimal_string, exact_from_f64, format_exact, parse_decimal, ArithOp, Exact, Value};
