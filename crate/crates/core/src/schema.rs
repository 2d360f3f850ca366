//! Dataset schemas shared by templates, the DSL and ingestion.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemanticType {
    Integer,
    Decimal,
    Categorical,
    SubjectId,
}

impl SemanticType {
    pub fn is_numeric(self) -> bool {
        matches!(self, SemanticType::Integer | SemanticType::Decimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticType::Integer => "integer",
            SemanticType::Decimal => "decimal",
            SemanticType::Categorical => "categorical",
            SemanticType::SubjectId => "subject-id",
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub semantic_type: SemanticType,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, semantic_type: SemanticType) -> Self {
        ColumnSpec { name: name.into(), semantic_type }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema must contain exactly one subject-id column, found {0}")]
    SubjectColumns(usize),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column names must be non-empty identifiers, got `{0}`")]
    BadName(String),
}

/// Ordered column list with exactly one subject-id column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColumnSpec>", into = "Vec<ColumnSpec>")]
pub struct DataSchema {
    columns: Vec<ColumnSpec>,
}

impl DataSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, SchemaError> {
        for (i, c) in columns.iter().enumerate() {
            if !is_identifier(&c.name) {
                return Err(SchemaError::BadName(c.name.clone()));
            }
            if columns[..i].iter().any(|p| p.name == c.name) {
                return Err(SchemaError::DuplicateColumn(c.name.clone()));
            }
        }
        let subjects = columns.iter().filter(|c| c.semantic_type == SemanticType::SubjectId).count();
        if subjects != 1 {
            return Err(SchemaError::SubjectColumns(subjects));
        }
        Ok(DataSchema { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn subject_column(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.semantic_type == SemanticType::SubjectId)
            .expect("schema invariant: one subject-id column")
    }

    pub fn subject_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.semantic_type == SemanticType::SubjectId)
            .expect("schema invariant: one subject-id column")
    }
}

impl TryFrom<Vec<ColumnSpec>> for DataSchema {
    type Error = SchemaError;

    fn try_from(columns: Vec<ColumnSpec>) -> Result<Self, Self::Error> {
        DataSchema::new(columns)
    }
}

impl From<DataSchema> for Vec<ColumnSpec> {
    fn from(s: DataSchema) -> Self {
        s.columns
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
