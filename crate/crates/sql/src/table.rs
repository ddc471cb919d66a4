use std::fmt;

use crate::ast::Select;
use crate::error::SqlError;
use crate::exec;
use crate::parser::parse;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Integer,
    Text,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Integer => "INTEGER",
            ColumnType::Text => "TEXT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

/// An in-memory table. Rows are kept in insertion order, which is also the
/// scan order seen by queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
    key_column: Option<usize>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        Table { name: name.into(), columns, rows: Vec::new(), key_column: None }
    }

    /// Marks the column used as the hidden ORDER BY tie-break.
    pub fn with_key_column(mut self, column: &str) -> Result<Self, SqlError> {
        let idx = self.column_index(column).ok_or_else(|| SqlError::UnknownColumn(column.to_string()))?;
        self.key_column = Some(idx);
        Ok(self)
    }

    pub fn push_row(&mut self, row: Vec<Value>) -> Result<(), SqlError> {
        if row.len() != self.columns.len() {
            return Err(SqlError::exec(format!(
                "table {} expects {} values, got {}",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        for (v, c) in row.iter().zip(&self.columns) {
            let ok = matches!(
                (v, c.ty),
                (Value::Null, _) | (Value::Int(_), ColumnType::Integer) | (Value::Text(_), ColumnType::Text)
            );
            if !ok {
                return Err(SqlError::exec(format!("value {v} does not fit column {} ({})", c.name, c.ty)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn key_column(&self) -> Option<usize> {
        self.key_column
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    tables: Vec<Table>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_table(&mut self, table: Table) {
        self.tables.retain(|t| !t.name.eq_ignore_ascii_case(&table.name));
        self.tables.push(table);
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn query(&self, sql: &str) -> Result<ResultTable, SqlError> {
        let select = parse(sql)?;
        self.execute(&select)
    }

    pub fn execute(&self, select: &Select) -> Result<ResultTable, SqlError> {
        exec::execute(self, select)
    }
}

/// Query output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Set when rows with equal ORDER BY keys but different output exist, so
    /// their relative order came from the hidden tie-break.
    pub tie_affected: bool,
}

impl ResultTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row-major flattening of all values.
    pub fn values(&self) -> impl Iterator<Item = &Value> {
        self.rows.iter().flatten()
    }
}
