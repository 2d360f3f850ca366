//! The restricted aggregate algorithm language.
//!
//! A program is an optional parameter list, an optional filter, an optional
//! categorical grouping, and a non-empty list of aggregates. There is no
//! construct that projects a raw column value; the only raw values that can
//! reach an output are categorical group keys and histogram buckets. The full
//! grammar lives in `docs/algorithm-dsl.ebnf`.
//!
//! ```text
//! PARAM min_age: integer
//! FILTER age >= $min_age AND NOT city = 'LA'
//! GROUP BY city
//! AGG count() AS n, mean(spend) AS avg_spend
//! ```

mod eval;
mod lexer;
mod parser;

pub use eval::{evaluate, AggValue, AggregateRow, AggregateTable, EvalError, RowId};
pub use parser::parse;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }
}

/// A literal in program text or a contract parameter binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Literal {
    Integer(i64),
    Decimal(#[serde(with = "crate::canonical::decimal_str")] Decimal),
    Text(String),
}

impl Literal {
    pub fn fits(&self, ty: ParamType) -> bool {
        matches!(
            (self, ty),
            (Literal::Integer(_), ParamType::Integer)
                | (Literal::Integer(_), ParamType::Decimal)
                | (Literal::Decimal(_), ParamType::Decimal)
                | (Literal::Text(_), ParamType::Categorical)
        )
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Literal::Integer(i) => Some(Decimal::from(*i)),
            Literal::Decimal(d) => Some(*d),
            Literal::Text(_) => None,
        }
    }

    /// Parses a command-line value according to a declared parameter type.
    pub fn parse_as(raw: &str, ty: ParamType) -> Option<Literal> {
        match ty {
            ParamType::Integer => raw.parse().ok().map(Literal::Integer),
            ParamType::Decimal => match raw.parse::<i64>() {
                Ok(i) => Some(Literal::Integer(i)),
                Err(_) => raw.parse::<Decimal>().ok().map(Literal::Decimal),
            },
            ParamType::Categorical => Some(Literal::Text(raw.to_string())),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Integer(i) => write!(f, "{i}"),
            Literal::Decimal(d) => write!(f, "{d}"),
            Literal::Text(s) => write!(f, "'{s}'"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Integer,
    Decimal,
    Categorical,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::Integer => "integer",
            ParamType::Decimal => "decimal",
            ParamType::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Literal(Literal),
    Param(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Compare { column: String, op: CompareOp, operand: Operand },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    fn collect_columns<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Predicate::Compare { column, .. } => {
                out.insert(column);
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.collect_columns(out);
                b.collect_columns(out);
            }
            Predicate::Not(p) => p.collect_columns(out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregateFunction {
    Count,
    Sum,
    Mean,
    Min,
    Max,
    Histogram,
}

impl AggregateFunction {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "count" => AggregateFunction::Count,
            "sum" => AggregateFunction::Sum,
            "mean" => AggregateFunction::Mean,
            "min" => AggregateFunction::Min,
            "max" => AggregateFunction::Max,
            "histogram" => AggregateFunction::Histogram,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregateFunction::Count => "count",
            AggregateFunction::Sum => "sum",
            AggregateFunction::Mean => "mean",
            AggregateFunction::Min => "min",
            AggregateFunction::Max => "max",
            AggregateFunction::Histogram => "histogram",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub output_name: String,
    pub function: AggregateFunction,
    /// `None` only for `count()`.
    pub column: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub param_type: ParamType,
}

/// A validated program. Only [`parse`] constructs one.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmAst {
    pub(crate) parameters: Vec<Parameter>,
    pub(crate) filter: Option<Predicate>,
    pub(crate) group_by: Vec<String>,
    pub(crate) aggregates: Vec<Aggregate>,
}

impl AlgorithmAst {
    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn filter(&self) -> Option<&Predicate> {
        self.filter.as_ref()
    }

    pub fn group_by(&self) -> &[String] {
        &self.group_by
    }

    pub fn aggregates(&self) -> &[Aggregate] {
        &self.aggregates
    }

    pub fn referenced_columns(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(f) = &self.filter {
            f.collect_columns(&mut out);
        }
        out.extend(self.group_by.iter().map(String::as_str));
        out.extend(self.aggregates.iter().filter_map(|a| a.column.as_deref()));
        out.into_iter().map(str::to_string).collect()
    }

    /// Problems with a set of bindings against the declared parameters. Empty means well-typed.
    pub fn check_bindings(&self, bindings: &BTreeMap<String, Literal>) -> Vec<BindingIssue> {
        check_bindings(&self.parameters, bindings)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BindingIssue {
    Missing { name: String },
    WrongType { name: String, expected: ParamType },
    Undeclared { name: String },
}

impl fmt::Display for BindingIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingIssue::Missing { name } => write!(f, "parameter `{name}` is not bound"),
            BindingIssue::WrongType { name, expected } => {
                write!(f, "parameter `{name}` must be bound to a {} value", expected.as_str())
            }
            BindingIssue::Undeclared { name } => write!(f, "binding `{name}` is not a declared parameter"),
        }
    }
}

pub fn check_bindings(params: &[Parameter], bindings: &BTreeMap<String, Literal>) -> Vec<BindingIssue> {
    let mut issues = Vec::new();
    for p in params {
        match bindings.get(&p.name) {
            None => issues.push(BindingIssue::Missing { name: p.name.clone() }),
            Some(v) if !v.fits(p.param_type) => {
                issues.push(BindingIssue::WrongType { name: p.name.clone(), expected: p.param_type })
            }
            Some(_) => {}
        }
    }
    for name in bindings.keys() {
        if !params.iter().any(|p| &p.name == name) {
            issues.push(BindingIssue::Undeclared { name: name.clone() });
        }
    }
    issues
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DslErrorKind {
    Syntax(String),
    UnknownColumn(String),
    TypeMismatch(String),
    SubjectIdReference(String),
    RawProjection(String),
    UnknownFunction(String),
    UnknownParameter(String),
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct DslError {
    pub kind: DslErrorKind,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for DslErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DslErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            DslErrorKind::UnknownColumn(c) => write!(f, "unknown column `{c}`"),
            DslErrorKind::TypeMismatch(m) => write!(f, "type mismatch: {m}"),
            DslErrorKind::SubjectIdReference(c) => write!(f, "subject-id column `{c}` may not be referenced"),
            DslErrorKind::RawProjection(m) => write!(f, "raw projection is not expressible: {m}"),
            DslErrorKind::UnknownFunction(n) => write!(f, "unknown aggregate function `{n}`"),
            DslErrorKind::UnknownParameter(n) => write!(f, "undeclared parameter `${n}`"),
            DslErrorKind::DuplicateName(n) => write!(f, "duplicate name `{n}`"),
        }
    }
}
