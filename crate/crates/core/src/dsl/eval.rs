use super::{AggregateFunction, AlgorithmAst, BindingIssue, CompareOp, Literal, Operand, Predicate};
use crate::dataset::{ColumnData, DatasetSnapshot};
use crate::schema::SemanticType;
use rust_decimal::{Decimal, RoundingStrategy};
use std::collections::BTreeMap;
use thiserror::Error;

/// Internal row identifier: the row's index in its snapshot.
pub type RowId = u32;

/// Fractional digits kept in every released numeric value.
pub const OUTPUT_SCALE: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AggValue {
    Number(Decimal),
    Histogram(BTreeMap<String, u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub key: Vec<String>,
    pub values: BTreeMap<String, AggValue>,
    /// Sorted, unique. Never serialized.
    pub cohort: Vec<RowId>,
}

impl AggregateRow {
    pub fn cohort_size(&self) -> usize {
        self.cohort.len()
    }
}

/// Pre-policy evaluation output. Rows are sorted by group key, keys unique.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub group_key_columns: Vec<String>,
    /// Aggregate output names in program order.
    pub value_columns: Vec<String>,
    pub rows: Vec<AggregateRow>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("consent mask has {got} entries for {expected} rows")]
    MaskLength { expected: usize, got: usize },
    #[error("{0}")]
    Binding(BindingIssue),
    #[error("snapshot has no compatible column `{0}`")]
    SchemaMismatch(String),
    #[error("arithmetic overflow computing `{0}`")]
    Overflow(String),
}

/// Rounds half-to-even to [`OUTPUT_SCALE`] digits and strips trailing zeros.
pub fn round_output(d: Decimal) -> Decimal {
    d.round_dp_with_strategy(OUTPUT_SCALE, RoundingStrategy::MidpointNearestEven).normalize()
}

enum Bound<'a> {
    Number { column: &'a ColumnData, op: CompareOp, value: Decimal },
    Text { column: &'a [String], op: CompareOp, value: String },
    And(Box<Bound<'a>>, Box<Bound<'a>>),
    Or(Box<Bound<'a>>, Box<Bound<'a>>),
    Not(Box<Bound<'a>>),
}

impl Bound<'_> {
    fn holds(&self, row: usize) -> bool {
        match self {
            Bound::Number { column, op, value } => {
                let cell = match column {
                    ColumnData::Integer(v) => Decimal::from(v[row]),
                    ColumnData::Decimal(v) => v[row],
                    ColumnData::Text(_) => return false,
                };
                op.holds(cell.cmp(value))
            }
            Bound::Text { column, op, value } => op.holds(column[row].as_str().cmp(value.as_str())),
            Bound::And(a, b) => a.holds(row) && b.holds(row),
            Bound::Or(a, b) => a.holds(row) || b.holds(row),
            Bound::Not(p) => !p.holds(row),
        }
    }
}

fn column_of<'a>(snapshot: &'a DatasetSnapshot, name: &str, want: &[SemanticType]) -> Result<&'a ColumnData, EvalError> {
    match snapshot.schema().get(name) {
        Some(spec) if want.contains(&spec.semantic_type) => Ok(snapshot.column(name).expect("schema and columns agree")),
        _ => Err(EvalError::SchemaMismatch(name.to_string())),
    }
}

fn text_column<'a>(snapshot: &'a DatasetSnapshot, name: &str) -> Result<&'a [String], EvalError> {
    match column_of(snapshot, name, &[SemanticType::Categorical])? {
        ColumnData::Text(v) => Ok(v),
        _ => Err(EvalError::SchemaMismatch(name.to_string())),
    }
}

fn bind<'a>(
    p: &Predicate,
    snapshot: &'a DatasetSnapshot,
    bindings: &BTreeMap<String, Literal>,
) -> Result<Bound<'a>, EvalError> {
    Ok(match p {
        Predicate::And(a, b) => Bound::And(Box::new(bind(a, snapshot, bindings)?), Box::new(bind(b, snapshot, bindings)?)),
        Predicate::Or(a, b) => Bound::Or(Box::new(bind(a, snapshot, bindings)?), Box::new(bind(b, snapshot, bindings)?)),
        Predicate::Not(inner) => Bound::Not(Box::new(bind(inner, snapshot, bindings)?)),
        Predicate::Compare { column, op, operand } => {
            let literal = match operand {
                Operand::Literal(l) => l.clone(),
                Operand::Param(name) => bindings
                    .get(name)
                    .cloned()
                    .ok_or_else(|| EvalError::Binding(BindingIssue::Missing { name: name.clone() }))?,
            };
            match literal {
                Literal::Text(value) => Bound::Text { column: text_column(snapshot, column)?, op: *op, value },
                numeric => Bound::Number {
                    column: column_of(snapshot, column, &[SemanticType::Integer, SemanticType::Decimal])?,
                    op: *op,
                    value: numeric.as_decimal().expect("numeric literal"),
                },
            }
        }
    })
}

enum Acc {
    Count,
    Sum(Decimal),
    Mean(Decimal),
    Min(Option<Decimal>),
    Max(Option<Decimal>),
    Histogram(BTreeMap<String, u64>),
}

/// Evaluates `ast` over the rows of `snapshot` selected by `mask` and the filter.
///
/// Empty groups are never emitted, so `mean` never divides by zero.
pub fn evaluate(
    ast: &AlgorithmAst,
    snapshot: &DatasetSnapshot,
    mask: &[bool],
    bindings: &BTreeMap<String, Literal>,
) -> Result<AggregateTable, EvalError> {
    if mask.len() != snapshot.row_count() {
        return Err(EvalError::MaskLength { expected: snapshot.row_count(), got: mask.len() });
    }
    if let Some(issue) = ast.check_bindings(bindings).into_iter().find(|i| !matches!(i, BindingIssue::Undeclared { .. })) {
        return Err(EvalError::Binding(issue));
    }
    let filter = ast.filter.as_ref().map(|f| bind(f, snapshot, bindings)).transpose()?;
    let keys: Vec<&[String]> = ast.group_by.iter().map(|g| text_column(snapshot, g)).collect::<Result<_, _>>()?;
    let inputs: Vec<Option<&ColumnData>> = ast
        .aggregates
        .iter()
        .map(|a| match (&a.column, a.function) {
            (None, _) => Ok(None),
            (Some(c), AggregateFunction::Histogram) => column_of(snapshot, c, &[SemanticType::Categorical]).map(Some),
            (Some(c), _) => column_of(snapshot, c, &[SemanticType::Integer, SemanticType::Decimal]).map(Some),
        })
        .collect::<Result<_, _>>()?;

    let mut groups: BTreeMap<Vec<String>, (Vec<RowId>, Vec<Acc>)> = BTreeMap::new();
    for row in 0..snapshot.row_count() {
        if !mask[row] || !filter.as_ref().is_none_or(|f| f.holds(row)) {
            continue;
        }
        let key: Vec<String> = keys.iter().map(|col| col[row].clone()).collect();
        let (cohort, accs) = groups.entry(key).or_insert_with(|| {
            let accs = ast
                .aggregates
                .iter()
                .map(|a| match a.function {
                    AggregateFunction::Count => Acc::Count,
                    AggregateFunction::Sum => Acc::Sum(Decimal::ZERO),
                    AggregateFunction::Mean => Acc::Mean(Decimal::ZERO),
                    AggregateFunction::Min => Acc::Min(None),
                    AggregateFunction::Max => Acc::Max(None),
                    AggregateFunction::Histogram => Acc::Histogram(BTreeMap::new()),
                })
                .collect();
            (Vec::new(), accs)
        });
        cohort.push(row as RowId);
        for ((acc, input), agg) in accs.iter_mut().zip(&inputs).zip(&ast.aggregates) {
            let number = || match input {
                Some(ColumnData::Integer(v)) => Decimal::from(v[row]),
                Some(ColumnData::Decimal(v)) => v[row],
                _ => Decimal::ZERO,
            };
            let overflow = || EvalError::Overflow(agg.output_name.clone());
            match acc {
                Acc::Count => {}
                Acc::Sum(s) | Acc::Mean(s) => *s = s.checked_add(number()).ok_or_else(overflow)?,
                Acc::Min(m) => *m = Some(m.map_or(number(), |cur| cur.min(number()))),
                Acc::Max(m) => *m = Some(m.map_or(number(), |cur| cur.max(number()))),
                Acc::Histogram(h) => {
                    if let Some(ColumnData::Text(v)) = input {
                        *h.entry(v[row].clone()).or_insert(0) += 1;
                    }
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (key, (cohort, accs)) in groups {
        let n = Decimal::from(cohort.len() as u64);
        let mut values = BTreeMap::new();
        for (acc, agg) in accs.into_iter().zip(&ast.aggregates) {
            let v = match acc {
                Acc::Count => AggValue::Number(n),
                Acc::Sum(s) => AggValue::Number(round_output(s)),
                Acc::Mean(s) => AggValue::Number(round_output(
                    s.checked_div(n).ok_or_else(|| EvalError::Overflow(agg.output_name.clone()))?,
                )),
                Acc::Min(m) | Acc::Max(m) => AggValue::Number(round_output(m.expect("non-empty group"))),
                Acc::Histogram(h) => AggValue::Histogram(h),
            };
            values.insert(agg.output_name.clone(), v);
        }
        rows.push(AggregateRow { key, values, cohort });
    }
    Ok(AggregateTable {
        group_key_columns: ast.group_by.clone(),
        value_columns: ast.aggregates.iter().map(|a| a.output_name.clone()).collect(),
        rows,
    })
}
