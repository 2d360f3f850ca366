//! Random schemas, datasets, programs and rule sets.
//!
//! Every generated artifact carries its own plain description (`GenData`,
//! `GenProgram`, `GenRule`) that the oracles read. Nothing here calls into the
//! evaluator, the policy module or the consent store.

use opal_core::consent::{ConsentRule, Effect, Pattern};
use opal_core::dataset::{CellValue, DatasetSnapshot};
use opal_core::dsl::{Literal, ParamType};
use opal_core::schema::{ColumnSpec, DataSchema, SemanticType};
use opal_core::signing::{Fingerprint, Keypair, PrincipalId, Role};
use opal_core::time::Timestamp;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;
use uuid::Uuid;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fixed-point scale used by the oracles for every numeric value.
pub const SCALE: u32 = 8;
pub const ONE: i128 = 100_000_000;

const WORDS: &[&str] = &["amber", "birch", "cedar", "delta", "ember", "fjord", "grove", "heath", "inlet", "juniper"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Small, collision-prone values that exercise ties and duplicates.
    Plain,
    /// Every integer, decimal and subject cell is a unique, recognisable token.
    Sentinel,
}

#[derive(Debug, Clone)]
pub struct GenColumn {
    pub name: String,
    pub ty: SemanticType,
    /// Vocabulary of a categorical column.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawCell {
    Int(i64),
    /// Value times 10^8, with the exact text written to the dataset.
    Dec(i128, String),
    Text(String),
}

impl RawCell {
    pub fn text(&self) -> String {
        match self {
            RawCell::Int(i) => i.to_string(),
            RawCell::Dec(_, s) => s.clone(),
            RawCell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenData {
    pub columns: Vec<GenColumn>,
    pub rows: Vec<Vec<RawCell>>,
    pub subject_col: usize,
    /// Every distinct subject id used in `rows`.
    pub subjects: Vec<String>,
    /// Subject keys by fingerprint; subject ids are key fingerprints.
    pub keys: BTreeMap<String, Keypair>,
}

impl GenData {
    pub fn schema(&self) -> DataSchema {
        DataSchema::new(self.columns.iter().map(|c| ColumnSpec::new(c.name.clone(), c.ty)).collect()).unwrap()
    }

    pub fn snapshot(&self, dataset_id: Uuid) -> DatasetSnapshot {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        RawCell::Int(i) => CellValue::Integer(*i),
                        RawCell::Dec(_, s) => CellValue::Decimal(Decimal::from_str(s).unwrap()),
                        RawCell::Text(s) => CellValue::Text(s.clone()),
                    })
                    .collect()
            })
            .collect();
        DatasetSnapshot::from_rows(dataset_id, self.schema(), rows, Timestamp::from_unix(0)).unwrap()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(RawCell::text).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn subject_of(&self, row: usize) -> &str {
        match &self.rows[row][self.subject_col] {
            RawCell::Text(s) => s,
            _ => unreachable!("subject column holds text"),
        }
    }

    pub fn indices_of(&self, ty: SemanticType) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| self.columns[i].ty == ty).collect()
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| matches!(self.columns[i].ty, SemanticType::Integer | SemanticType::Decimal)).collect()
    }

    /// Every planted token: integer, decimal and subject cells.
    pub fn sentinels(&self) -> Vec<String> {
        self.rows
            .iter()
            .flat_map(|r| r.iter().zip(&self.columns))
            .filter(|(_, c)| c.ty != SemanticType::Categorical)
            .map(|(cell, _)| cell.text())
            .collect()
    }
}

/// Writes `v / 10^scale` in shortest positional form.
pub fn fmt_scaled(v: i128, scale: u32) -> String {
    if v == 0 {
        return "0".into();
    }
    let neg = v < 0;
    let mag = v.unsigned_abs();
    let unit = 10u128.pow(scale);
    let int = mag / unit;
    let mut frac = format!("{:0width$}", mag % unit, width = scale as usize);
    while frac.ends_with('0') {
        frac.pop();
    }
    let mut s = String::new();
    if neg {
        s.push('-');
    }
    s.push_str(&int.to_string());
    if !frac.is_empty() {
        s.push('.');
        s.push_str(&frac);
    }
    s
}

pub fn random_fingerprint(rng: &mut TestRng) -> String {
    (0..32).map(|_| format!("{:02x}", rng.gen::<u8>())).collect()
}

pub fn subject_key(rng: &mut TestRng) -> Keypair {
    Keypair::from_seed(Role::Subject, rng.gen())
}

pub fn fingerprint_of(key: &Keypair) -> String {
    key.public_key().fingerprint().as_str().to_string()
}

pub fn subject_principal(fp: &str) -> PrincipalId {
    PrincipalId { role: Role::Subject, key_fingerprint: Fingerprint::parse(fp).unwrap() }
}

/// Process-wide uniqueness for sentinel values.
pub struct SentinelPool {
    used: HashSet<String>,
}

impl SentinelPool {
    pub fn new() -> Self {
        SentinelPool { used: HashSet::new() }
    }

    fn claim(&mut self, s: &str) -> bool {
        self.used.insert(s.to_string())
    }

    pub fn integer(&mut self, rng: &mut TestRng) -> i64 {
        loop {
            let v = rng.gen_range(1_000_000_000i64..2_000_000_000);
            if v % 100_000_000 != 0 && self.claim(&v.to_string()) {
                return v;
            }
        }
    }

    /// Exactly eight fractional digits, last one non-zero.
    pub fn decimal(&mut self, rng: &mut TestRng) -> (i128, String) {
        loop {
            let mut v = rng.gen_range(ONE..10_000 * ONE);
            if v % 10 == 0 {
                v += rng.gen_range(1..10);
            }
            let v = if rng.gen_bool(0.3) { -v } else { v };
            let s = fmt_scaled(v, SCALE);
            if self.claim(&s) {
                return (v, s);
            }
        }
    }

    pub fn subject(&mut self, rng: &mut TestRng) -> Keypair {
        loop {
            let key = subject_key(rng);
            if self.claim(key.public_key().fingerprint().as_str()) {
                return key;
            }
        }
    }
}

impl Default for SentinelPool {
    fn default() -> Self {
        Self::new()
    }
}

pub fn random_columns(rng: &mut TestRng, max_columns: usize) -> (Vec<GenColumn>, usize) {
    let n = rng.gen_range(2..=max_columns);
    let subject_col = rng.gen_range(0..n);
    let columns = (0..n)
        .map(|i| {
            if i == subject_col {
                return GenColumn { name: format!("sid{i}"), ty: SemanticType::SubjectId, categories: vec![] };
            }
            let ty = *[SemanticType::Integer, SemanticType::Decimal, SemanticType::Categorical].choose(rng).unwrap();
            let (name, categories) = match ty {
                SemanticType::Integer => (format!("n{i}"), vec![]),
                SemanticType::Decimal => (format!("d{i}"), vec![]),
                _ => {
                    let k = rng.gen_range(1..=5);
                    let mut words: Vec<String> = WORDS.choose_multiple(rng, k).map(|w| w.to_string()).collect();
                    words.sort();
                    (format!("c{i}"), words)
                }
            };
            GenColumn { name, ty, categories }
        })
        .collect();
    (columns, subject_col)
}

pub fn plain_decimal(rng: &mut TestRng) -> (i128, String) {
    let digits = rng.gen_range(0..=4u32);
    let v = rng.gen_range(-5_000i128..=5_000) * ONE / 10i128.pow(digits);
    (v, fmt_scaled(v, SCALE))
}

/// A dataset of `rows` rows over `columns`.
pub fn random_rows(
    rng: &mut TestRng,
    columns: &[GenColumn],
    subject_col: usize,
    rows: usize,
    mode: Mode,
    pool: &mut SentinelPool,
) -> GenData {
    let mut keys = BTreeMap::new();
    let plain_subjects: Vec<String> = match mode {
        Mode::Plain => (0..rng.gen_range(1..=rows.clamp(1, 100)))
            .map(|_| {
                let k = subject_key(rng);
                let fp = fingerprint_of(&k);
                keys.insert(fp.clone(), k);
                fp
            })
            .collect(),
        Mode::Sentinel => Vec::new(),
    };
    let mut data = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row = columns
            .iter()
            .map(|c| match (c.ty, mode) {
                (SemanticType::SubjectId, Mode::Plain) => RawCell::Text(plain_subjects.choose(rng).unwrap().clone()),
                (SemanticType::SubjectId, Mode::Sentinel) => {
                    let k = pool.subject(rng);
                    let fp = fingerprint_of(&k);
                    keys.insert(fp.clone(), k);
                    RawCell::Text(fp)
                }
                (SemanticType::Integer, Mode::Plain) => RawCell::Int(rng.gen_range(-100..=100)),
                (SemanticType::Integer, Mode::Sentinel) => RawCell::Int(pool.integer(rng)),
                (SemanticType::Decimal, Mode::Plain) => {
                    let (v, s) = plain_decimal(rng);
                    RawCell::Dec(v, s)
                }
                (SemanticType::Decimal, Mode::Sentinel) => {
                    let (v, s) = pool.decimal(rng);
                    RawCell::Dec(v, s)
                }
                (SemanticType::Categorical, _) => RawCell::Text(c.categories.choose(rng).unwrap().clone()),
            })
            .collect();
        data.push(row);
    }
    let mut subjects: Vec<String> = data
        .iter()
        .map(|r: &Vec<RawCell>| r[subject_col].text())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    subjects.sort();
    keys.retain(|fp, _| subjects.binary_search(fp).is_ok());
    GenData { columns: columns.to_vec(), rows: data, subject_col, subjects, keys }
}

pub fn random_data(rng: &mut TestRng, max_columns: usize, max_rows: usize, mode: Mode, pool: &mut SentinelPool) -> GenData {
    let (columns, subject_col) = random_columns(rng, max_columns);
    let rows = rng.gen_range(0..=max_rows);
    random_rows(rng, &columns, subject_col, rows, mode, pool)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenValue {
    /// Value times 10^8, source text, and whether it was written as an integer.
    Num(i128, String, bool),
    Text(String),
}

#[derive(Debug, Clone)]
pub enum GenOperand {
    Lit(GenValue),
    Param(String, GenValue),
}

impl GenOperand {
    pub fn value(&self) -> &GenValue {
        match self {
            GenOperand::Lit(v) | GenOperand::Param(_, v) => v,
        }
    }
}

#[derive(Debug, Clone)]
pub enum GenPred {
    Cmp { col: usize, op: Op, operand: GenOperand },
    And(Box<GenPred>, Box<GenPred>),
    Or(Box<GenPred>, Box<GenPred>),
    Not(Box<GenPred>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Count,
    Sum,
    Mean,
    Min,
    Max,
    Histogram,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Count => "count",
            Func::Sum => "sum",
            Func::Mean => "mean",
            Func::Min => "min",
            Func::Max => "max",
            Func::Histogram => "histogram",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenAgg {
    pub name: String,
    pub func: Func,
    pub col: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GenProgram {
    pub params: Vec<(String, ParamType)>,
    pub filter: Option<GenPred>,
    pub group_by: Vec<usize>,
    pub aggs: Vec<GenAgg>,
}

impl GenProgram {
    pub fn bindings(&self) -> BTreeMap<String, Literal> {
        let mut out = BTreeMap::new();
        fn walk(p: &GenPred, out: &mut BTreeMap<String, Literal>) {
            match p {
                GenPred::Cmp { operand: GenOperand::Param(name, v), .. } => {
                    let lit = match v {
                        GenValue::Num(_, s, true) => Literal::Integer(s.parse().unwrap()),
                        GenValue::Num(_, s, false) => Literal::Decimal(Decimal::from_str(s).unwrap()),
                        GenValue::Text(s) => Literal::Text(s.clone()),
                    };
                    out.insert(name.clone(), lit);
                }
                GenPred::Cmp { .. } => {}
                GenPred::And(a, b) | GenPred::Or(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                GenPred::Not(a) => walk(a, out),
            }
        }
        if let Some(f) = &self.filter {
            walk(f, &mut out);
        }
        out
    }

    pub fn source(&self, columns: &[GenColumn], rng: &mut TestRng) -> String {
        let kw = |rng: &mut TestRng, w: &str| if rng.gen_bool(0.5) { w.to_uppercase() } else { w.to_lowercase() };
        let mut lines = Vec::new();
        if !self.params.is_empty() {
            let list: Vec<String> = self.params.iter().map(|(n, t)| format!("{n}: {}", t.as_str())).collect();
            lines.push(format!("{} {}", kw(rng, "param"), list.join(", ")));
        }
        if let Some(f) = &self.filter {
            let text = render_pred(f, columns);
            lines.push(format!("{} {text}", kw(rng, "filter")));
        }
        if !self.group_by.is_empty() {
            let cols: Vec<&str> = self.group_by.iter().map(|&i| columns[i].name.as_str()).collect();
            lines.push(format!("{} {} {}", kw(rng, "group"), kw(rng, "by"), cols.join(", ")));
        }
        let aggs: Vec<String> = self
            .aggs
            .iter()
            .map(|a| {
                let arg = a.col.map(|i| columns[i].name.as_str()).unwrap_or("");
                format!("{}({arg}) {} {}", a.func.name(), kw(rng, "as"), a.name)
            })
            .collect();
        lines.push(format!("{} {}", kw(rng, "agg"), aggs.join(", ")));
        lines.join("\n")
    }

    /// Column names the program mentions.
    pub fn referenced(&self, columns: &[GenColumn]) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        fn walk(p: &GenPred, columns: &[GenColumn], out: &mut std::collections::BTreeSet<String>) {
            match p {
                GenPred::Cmp { col, .. } => {
                    out.insert(columns[*col].name.clone());
                }
                GenPred::And(a, b) | GenPred::Or(a, b) => {
                    walk(a, columns, out);
                    walk(b, columns, out);
                }
                GenPred::Not(a) => walk(a, columns, out),
            }
        }
        if let Some(f) = &self.filter {
            walk(f, columns, &mut out);
        }
        for &g in &self.group_by {
            out.insert(columns[g].name.clone());
        }
        for a in &self.aggs {
            if let Some(c) = a.col {
                out.insert(columns[c].name.clone());
            }
        }
        out
    }
}

fn render_pred(p: &GenPred, columns: &[GenColumn]) -> String {
    match p {
        GenPred::Cmp { col, op, operand } => {
            let rhs = match operand {
                GenOperand::Param(name, _) => format!("${name}"),
                GenOperand::Lit(GenValue::Num(_, s, _)) => s.clone(),
                GenOperand::Lit(GenValue::Text(s)) => format!("'{s}'"),
            };
            format!("{} {} {rhs}", columns[*col].name, op.symbol())
        }
        GenPred::And(a, b) => format!("({} AND {})", render_pred(a, columns), render_pred(b, columns)),
        GenPred::Or(a, b) => format!("({} or {})", render_pred(a, columns), render_pred(b, columns)),
        GenPred::Not(a) => format!("NOT ({})", render_pred(a, columns)),
    }
}

struct ProgramBuilder<'a> {
    data: &'a GenData,
    params: Vec<(String, ParamType)>,
    numeric_literal: &'a dyn Fn(&mut TestRng, &GenData, usize) -> GenValue,
}

impl ProgramBuilder<'_> {
    fn pred(&mut self, rng: &mut TestRng, depth: u32) -> Option<GenPred> {
        let candidates: Vec<usize> =
            (0..self.data.columns.len()).filter(|&i| self.data.columns[i].ty != SemanticType::SubjectId).collect();
        if candidates.is_empty() {
            return None;
        }
        if depth > 0 && rng.gen_bool(0.45) {
            let a = self.pred(rng, depth - 1)?;
            return Some(match rng.gen_range(0..3) {
                0 => GenPred::And(Box::new(a), Box::new(self.pred(rng, depth - 1)?)),
                1 => GenPred::Or(Box::new(a), Box::new(self.pred(rng, depth - 1)?)),
                _ => GenPred::Not(Box::new(a)),
            });
        }
        let col = *candidates.choose(rng).unwrap();
        let c = &self.data.columns[col];
        let (op, value) = if c.ty == SemanticType::Categorical {
            let op = if rng.gen_bool(0.5) { Op::Eq } else { Op::Ne };
            let word = if rng.gen_bool(0.85) { c.categories.choose(rng).unwrap().clone() } else { "zzz".to_string() };
            (op, GenValue::Text(word))
        } else {
            let op = *[Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge].choose(rng).unwrap();
            (op, (self.numeric_literal)(rng, self.data, col))
        };
        let operand = if rng.gen_bool(0.3) {
            let name = format!("p{}", self.params.len());
            let ty = match &value {
                GenValue::Text(_) => ParamType::Categorical,
                GenValue::Num(_, _, true) if rng.gen_bool(0.7) => ParamType::Integer,
                GenValue::Num(..) => ParamType::Decimal,
            };
            self.params.push((name.clone(), ty));
            GenOperand::Param(name, value)
        } else {
            GenOperand::Lit(value)
        };
        Some(GenPred::Cmp { col, op, operand })
    }
}

/// Literal for a numeric comparison: usually a value present in the column so
/// that equality and boundaries get exercised.
pub fn data_literal(rng: &mut TestRng, data: &GenData, col: usize) -> GenValue {
    let existing: Option<&RawCell> = data.rows.choose(rng).map(|r| &r[col]);
    match existing {
        Some(RawCell::Int(i)) if rng.gen_bool(0.7) => GenValue::Num(*i as i128 * ONE, i.to_string(), true),
        Some(RawCell::Dec(v, s)) if rng.gen_bool(0.7) => GenValue::Num(*v, s.clone(), !s.contains('.')),
        _ => {
            if rng.gen_bool(0.5) {
                let i = rng.gen_range(-120i64..=120);
                GenValue::Num(i as i128 * ONE, i.to_string(), true)
            } else {
                let (v, s) = plain_decimal(rng);
                let is_int = !s.contains('.');
                GenValue::Num(v, s, is_int)
            }
        }
    }
}

/// Literal that never equals a planted sentinel: thresholds are drawn from
/// outside the sentinel ranges or rounded to whole hundreds of millions.
pub fn opaque_literal(rng: &mut TestRng, data: &GenData, col: usize) -> GenValue {
    match data.columns[col].ty {
        SemanticType::Integer => {
            let i = rng.gen_range(10..20i64) * 100_000_000;
            GenValue::Num(i as i128 * ONE, i.to_string(), true)
        }
        _ => {
            let i = rng.gen_range(-100..100i64) * 100;
            GenValue::Num(i as i128 * ONE, i.to_string(), true)
        }
    }
}

pub fn random_program(
    rng: &mut TestRng,
    data: &GenData,
    numeric_literal: &dyn Fn(&mut TestRng, &GenData, usize) -> GenValue,
) -> GenProgram {
    let mut b = ProgramBuilder { data, params: Vec::new(), numeric_literal };
    let filter = if rng.gen_bool(0.7) { b.pred(rng, 3) } else { None };
    let mut cats = data.indices_of(SemanticType::Categorical);
    cats.shuffle(rng);
    let group_by: Vec<usize> = cats.iter().copied().take(rng.gen_range(0..=2)).collect();

    let numeric = data.numeric_indices();
    let cats = data.indices_of(SemanticType::Categorical);
    let mut aggs = Vec::new();
    for i in 0..rng.gen_range(1..=4) {
        let name = format!("a{i}");
        let pick = rng.gen_range(0..6);
        let agg = match pick {
            1..=4 if !numeric.is_empty() => {
                let func = [Func::Sum, Func::Mean, Func::Min, Func::Max][pick - 1];
                GenAgg { name, func, col: Some(*numeric.choose(rng).unwrap()) }
            }
            5 if !cats.is_empty() => GenAgg { name, func: Func::Histogram, col: Some(*cats.choose(rng).unwrap()) },
            _ => GenAgg { name, func: Func::Count, col: None },
        };
        aggs.push(agg);
    }
    GenProgram { params: b.params, filter, group_by, aggs }
}

/// A consent rule described independently of the consent store.
#[derive(Debug, Clone)]
pub struct GenRule {
    pub rule_id: Uuid,
    pub subject: String,
    pub dataset_id: Uuid,
    pub algorithm: Option<Uuid>,
    pub querier: Option<PrincipalId>,
    pub allow: bool,
    pub expires_at: Option<i64>,
    pub revoked: bool,
}

impl GenRule {
    pub fn to_rule(&self) -> ConsentRule {
        ConsentRule {
            rule_id: self.rule_id,
            subject: subject_principal(&self.subject),
            dataset_id: self.dataset_id,
            algorithm_pattern: self.algorithm.map(Pattern::Exact).unwrap_or(Pattern::Any),
            querier_pattern: self.querier.clone().map(Pattern::Exact).unwrap_or(Pattern::Any),
            effect: if self.allow { Effect::Allow } else { Effect::Deny },
            expires_at: self.expires_at.map(Timestamp::from_unix),
            revoked: false,
        }
    }
}

pub struct RuleContext<'a> {
    pub subjects: &'a [String],
    pub dataset_id: Uuid,
    pub algorithm_id: Uuid,
    pub querier: &'a PrincipalId,
    pub now: i64,
}

/// `n` rules over `ctx.subjects`, mixing matching and non-matching patterns.
pub fn random_rules(rng: &mut TestRng, ctx: &RuleContext, n: usize) -> Vec<GenRule> {
    let other_querier = PrincipalId { role: Role::Querier, key_fingerprint: Fingerprint::parse(&random_fingerprint(rng)).unwrap() };
    (0..n)
        .map(|_| GenRule {
            rule_id: Uuid::from_u128(rng.gen()),
            subject: ctx.subjects.choose(rng).cloned().unwrap_or_else(|| random_fingerprint(rng)),
            dataset_id: if rng.gen_bool(0.9) { ctx.dataset_id } else { Uuid::from_u128(rng.gen()) },
            algorithm: match rng.gen_range(0..4) {
                0 => Some(ctx.algorithm_id),
                1 => Some(Uuid::from_u128(rng.gen())),
                _ => None,
            },
            querier: match rng.gen_range(0..4) {
                0 => Some(ctx.querier.clone()),
                1 => Some(other_querier.clone()),
                _ => None,
            },
            allow: rng.gen_bool(0.75),
            expires_at: match rng.gen_range(0..4) {
                0 => Some(ctx.now - rng.gen_range(0..1000)),
                1 => Some(ctx.now + rng.gen_range(1..1000)),
                _ => None,
            },
            revoked: rng.gen_bool(0.1),
        })
        .collect()
}
