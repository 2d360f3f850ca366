//! Immutable dataset snapshots and CSV ingestion.
//!
//! Ingestion is all-or-nothing: one malformed row rejects the whole file.
//! Error messages name the row and column but never echo cell contents.

use crate::schema::{DataSchema, SemanticType};
use crate::time::Timestamp;
use rust_decimal::Decimal;
use std::collections::HashSet;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Integer(i64),
    Decimal(Decimal),
    Text(String),
}

/// Column-major storage; `Text` backs categorical and subject-id columns.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Integer(Vec<i64>),
    Decimal(Vec<Decimal>),
    Text(Vec<String>),
}

impl ColumnData {
    fn for_type(t: SemanticType, capacity: usize) -> Self {
        match t {
            SemanticType::Integer => ColumnData::Integer(Vec::with_capacity(capacity)),
            SemanticType::Decimal => ColumnData::Decimal(Vec::with_capacity(capacity)),
            SemanticType::Categorical | SemanticType::SubjectId => ColumnData::Text(Vec::with_capacity(capacity)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Integer(v) => v.len(),
            ColumnData::Decimal(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, row: usize) -> CellValue {
        match self {
            ColumnData::Integer(v) => CellValue::Integer(v[row]),
            ColumnData::Decimal(v) => CellValue::Decimal(v[row]),
            ColumnData::Text(v) => CellValue::Text(v[row].clone()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("row {row}, column `{column}`: value is not a valid {expected}")]
    Coercion { row: usize, column: String, expected: SemanticType },
    #[error("row {row}: subject column `{column}` is empty")]
    MissingSubject { row: usize, column: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount { row: usize, expected: usize, found: usize },
    #[error("csv read failure: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSnapshot {
    dataset_id: Uuid,
    schema: DataSchema,
    columns: Vec<ColumnData>,
    row_count: usize,
    ingested_at: Timestamp,
}

impl DatasetSnapshot {
    /// Builds a snapshot from typed rows, validating every cell against the schema.
    pub fn from_rows(
        dataset_id: Uuid,
        schema: DataSchema,
        rows: Vec<Vec<CellValue>>,
        ingested_at: Timestamp,
    ) -> Result<Self, IngestError> {
        let mut columns: Vec<ColumnData> =
            schema.columns().iter().map(|c| ColumnData::for_type(c.semantic_type, rows.len())).collect();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != schema.len() {
                return Err(IngestError::FieldCount { row: r + 1, expected: schema.len(), found: row.len() });
            }
            for ((spec, col), cell) in schema.columns().iter().zip(columns.iter_mut()).zip(row) {
                let mismatch = || IngestError::Coercion { row: r + 1, column: spec.name.clone(), expected: spec.semantic_type };
                match (col, cell) {
                    (ColumnData::Integer(v), CellValue::Integer(x)) => v.push(x),
                    (ColumnData::Decimal(v), CellValue::Decimal(x)) => v.push(x),
                    (ColumnData::Decimal(v), CellValue::Integer(x)) => v.push(Decimal::from(x)),
                    (ColumnData::Text(v), CellValue::Text(x)) => {
                        if spec.semantic_type == SemanticType::SubjectId && x.is_empty() {
                            return Err(IngestError::MissingSubject { row: r + 1, column: spec.name.clone() });
                        }
                        v.push(x)
                    }
                    _ => return Err(mismatch()),
                }
            }
        }
        let row_count = columns.first().map(ColumnData::len).unwrap_or(0);
        Ok(DatasetSnapshot { dataset_id, schema, columns, row_count, ingested_at })
    }

    pub fn dataset_id(&self) -> Uuid {
        self.dataset_id
    }

    pub fn schema(&self) -> &DataSchema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn ingested_at(&self) -> Timestamp {
        self.ingested_at
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn column_at(&self, index: usize) -> &ColumnData {
        &self.columns[index]
    }

    pub fn subject_column_name(&self) -> &str {
        &self.schema.subject_column().name
    }

    /// Subject identifiers, one per row.
    pub fn subjects(&self) -> &[String] {
        match &self.columns[self.schema.subject_index()] {
            ColumnData::Text(v) => v,
            _ => unreachable!("subject column is text"),
        }
    }

    pub fn contains_subject(&self, subject: &str) -> bool {
        self.subjects().iter().any(|s| s == subject)
    }

    pub fn distinct_subjects(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.subjects().iter().filter(|s| seen.insert(s.as_str())).cloned().collect()
    }

    pub fn row(&self, index: usize) -> Vec<CellValue> {
        self.columns.iter().map(|c| c.cell(index)).collect()
    }
}

/// Parses a CSV whose header row must list the schema's columns in order.
pub fn ingest_csv<R: Read>(
    reader: R,
    schema: &DataSchema,
    dataset_id: Uuid,
    ingested_at: Timestamp,
) -> Result<DatasetSnapshot, IngestError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let expected: Vec<String> = schema.columns().iter().map(|c| c.name.clone()).collect();
    if header != expected {
        return Err(IngestError::HeaderMismatch { expected, found: header });
    }

    let mut columns: Vec<ColumnData> = schema.columns().iter().map(|c| ColumnData::for_type(c.semantic_type, 0)).collect();
    for (r, record) in csv.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| IngestError::Csv(format!("row {row}: {}", csv_kind(&e))))?;
        if record.len() != schema.len() {
            return Err(IngestError::FieldCount { row, expected: schema.len(), found: record.len() });
        }
        for ((spec, col), raw) in schema.columns().iter().zip(columns.iter_mut()).zip(record.iter()) {
            let field = raw.trim();
            let bad = || IngestError::Coercion { row, column: spec.name.clone(), expected: spec.semantic_type };
            match col {
                ColumnData::Integer(v) => v.push(field.parse::<i64>().map_err(|_| bad())?),
                ColumnData::Decimal(v) => {
                    if field.contains(['e', 'E']) {
                        return Err(bad());
                    }
                    v.push(Decimal::from_str(field).map_err(|_| bad())?)
                }
                ColumnData::Text(v) => {
                    if spec.semantic_type == SemanticType::SubjectId && field.is_empty() {
                        return Err(IngestError::MissingSubject { row, column: spec.name.clone() });
                    }
                    v.push(field.to_string())
                }
            }
        }
    }
    let row_count = columns.first().map(ColumnData::len).unwrap_or(0);
    Ok(DatasetSnapshot { dataset_id, schema: schema.clone(), columns, row_count, ingested_at })
}

// csv errors can quote the offending record; keep only the category.
fn csv_kind(e: &csv::Error) -> &'static str {
    match e.kind() {
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8",
        csv::ErrorKind::UnequalLengths { .. } => "unequal field count",
        csv::ErrorKind::Io(_) => "I/O error",
        _ => "malformed record",
    }
}

pub fn ingest_file(
    path: &Path,
    schema: &DataSchema,
    dataset_id: Uuid,
    ingested_at: Timestamp,
) -> Result<DatasetSnapshot, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::Csv(format!("{}: {}", path.display(), e.kind())))?;
    ingest_csv(std::io::BufReader::new(file), schema, dataset_id, ingested_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;

    fn schema() -> DataSchema {
        DataSchema::new(vec![
            ColumnSpec::new("subject_id", SemanticType::SubjectId),
            ColumnSpec::new("age", SemanticType::Integer),
            ColumnSpec::new("spend", SemanticType::Decimal),
            ColumnSpec::new("city", SemanticType::Categorical),
        ])
        .unwrap()
    }

    fn ts() -> Timestamp {
        Timestamp::from_unix(1_700_000_000)
    }

    #[test]
    fn three_row_csv() {
        let csv = "subject_id,age,spend,city\ns1,30,10.5,NY\ns2,41,3,LA\ns3,18,0.25,NY\n";
        let snap = ingest_csv(csv.as_bytes(), &schema(), Uuid::nil(), ts()).unwrap();
        assert_eq!(snap.row_count(), 3);
        assert_eq!(snap.row(1), vec![
            CellValue::Text("s2".into()),
            CellValue::Integer(41),
            CellValue::Decimal(Decimal::from(3)),
            CellValue::Text("LA".into()),
        ]);
        assert_eq!(snap.subjects(), &["s1", "s2", "s3"]);
    }

    #[test]
    fn non_numeric_integer_names_row_and_column() {
        let csv = "subject_id,age,spend,city\ns1,30,1,NY\ns2,SECRET,1,LA\n";
        let err = ingest_csv(csv.as_bytes(), &schema(), Uuid::nil(), ts()).unwrap_err();
        assert_eq!(err, IngestError::Coercion { row: 2, column: "age".into(), expected: SemanticType::Integer });
        assert!(!err.to_string().contains("SECRET"));
    }

    #[test]
    fn header_mismatch() {
        let csv = "subject_id,spend,age,city\n";
        assert!(matches!(
            ingest_csv(csv.as_bytes(), &schema(), Uuid::nil(), ts()),
            Err(IngestError::HeaderMismatch { .. })
        ));
    }

    #[test]
    fn empty_subject_rejected() {
        let csv = "subject_id,age,spend,city\n,30,1,NY\n";
        assert!(matches!(
            ingest_csv(csv.as_bytes(), &schema(), Uuid::nil(), ts()),
            Err(IngestError::MissingSubject { row: 1, .. })
        ));
    }

    #[test]
    fn ragged_row_rejected() {
        let csv = "subject_id,age,spend,city\ns1,30,1\n";
        assert!(matches!(
            ingest_csv(csv.as_bytes(), &schema(), Uuid::nil(), ts()),
            Err(IngestError::FieldCount { row: 1, expected: 4, found: 3 })
        ));
    }

    #[test]
    fn exponent_decimals_rejected() {
        let csv = "subject_id,age,spend,city\ns1,30,1e3,NY\n";
        assert!(ingest_csv(csv.as_bytes(), &schema(), Uuid::nil(), ts()).is_err());
    }

    #[test]
    fn from_rows_checks_types() {
        let rows = vec![vec![
            CellValue::Text("s".into()),
            CellValue::Text("x".into()),
            CellValue::Integer(1),
            CellValue::Text("c".into()),
        ]];
        assert!(matches!(
            DatasetSnapshot::from_rows(Uuid::nil(), schema(), rows, ts()),
            Err(IngestError::Coercion { row: 1, .. })
        ));
    }
}
