//! Brute-force reference implementations. None of these share code with the
//! library beyond its public data types.

use super::gen::{fmt_scaled, Func, GenData, GenPred, GenProgram, GenRule, GenValue, Op, RawCell, ONE};
use opal_core::signing::PrincipalId;
use serde_json::{json, Map, Value as Json};
use sha2::{Digest as _, Sha256};
use std::collections::BTreeMap;
use uuid::Uuid;

/// Half-to-even division for a positive denominator.
pub fn div_half_even(num: i128, den: i128) -> i128 {
    assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

/// Rounds a 10^8-scaled value to six fractional digits and writes it.
pub fn release(v: i128) -> String {
    fmt_scaled(div_half_even(v, 100), 6)
}

fn scaled(cell: &RawCell) -> i128 {
    match cell {
        RawCell::Int(i) => *i as i128 * ONE,
        RawCell::Dec(v, _) => *v,
        RawCell::Text(_) => panic!("not numeric"),
    }
}

pub fn holds(p: &GenPred, row: &[RawCell]) -> bool {
    match p {
        GenPred::And(a, b) => holds(a, row) && holds(b, row),
        GenPred::Or(a, b) => holds(a, row) || holds(b, row),
        GenPred::Not(a) => !holds(a, row),
        GenPred::Cmp { col, op, operand } => match (operand.value(), &row[*col]) {
            (GenValue::Text(want), RawCell::Text(have)) => match op {
                Op::Eq => have == want,
                Op::Ne => have != want,
                _ => panic!("ordering on text"),
            },
            (GenValue::Num(want, _, _), cell) => {
                let have = scaled(cell);
                match op {
                    Op::Eq => have == *want,
                    Op::Ne => have != *want,
                    Op::Lt => have < *want,
                    Op::Le => have <= *want,
                    Op::Gt => have > *want,
                    Op::Ge => have >= *want,
                }
            }
            _ => panic!("operand type does not match column"),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleCell {
    Num(String),
    Hist(BTreeMap<String, u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGroup {
    pub key: Vec<String>,
    pub rows: Vec<usize>,
    pub cells: Vec<(String, OracleCell)>,
}

/// Filters, groups and aggregates by looping over rows.
pub fn evaluate(data: &GenData, prog: &GenProgram, mask: &[bool]) -> Vec<OracleGroup> {
    let mut groups: Vec<(Vec<String>, Vec<usize>)> = Vec::new();
    for (i, row) in data.rows.iter().enumerate() {
        if !mask[i] {
            continue;
        }
        if let Some(f) = &prog.filter {
            if !holds(f, row) {
                continue;
            }
        }
        let key: Vec<String> = prog.group_by.iter().map(|&g| row[g].text()).collect();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    groups
        .into_iter()
        .map(|(key, rows)| {
            let cells = prog
                .aggs
                .iter()
                .map(|a| {
                    let values = || rows.iter().map(|&r| scaled(&data.rows[r][a.col.unwrap()]));
                    let cell = match a.func {
                        Func::Count => OracleCell::Num(rows.len().to_string()),
                        Func::Sum => OracleCell::Num(release(values().sum())),
                        Func::Mean => {
                            let sum: i128 = values().sum();
                            // sum / n at 10^6 scale: sum·10^6 / (n·10^8)
                            OracleCell::Num(fmt_scaled(div_half_even(sum, rows.len() as i128 * 100), 6))
                        }
                        Func::Min => OracleCell::Num(release(values().min().unwrap())),
                        Func::Max => OracleCell::Num(release(values().max().unwrap())),
                        Func::Histogram => {
                            let mut h = BTreeMap::new();
                            for &r in &rows {
                                *h.entry(data.rows[r][a.col.unwrap()].text()).or_insert(0u64) += 1;
                            }
                            OracleCell::Hist(h)
                        }
                    };
                    (a.name.clone(), cell)
                })
                .collect();
            OracleGroup { key, rows, cells }
        })
        .collect()
}

/// The wire form a provider would release for these groups at `k_min`.
pub fn safe_table_json(data: &GenData, prog: &GenProgram, groups: &[OracleGroup], k_min: usize) -> Json {
    let rows: Vec<Json> = groups
        .iter()
        .map(|g| {
            let suppressed = g.rows.len() < k_min;
            let mut cells = Map::new();
            for (name, cell) in &g.cells {
                let v = match (suppressed, cell) {
                    (true, _) => json!("SUPPRESSED"),
                    (false, OracleCell::Num(s)) => json!(s),
                    (false, OracleCell::Hist(h)) => json!(h),
                };
                cells.insert(name.clone(), v);
            }
            json!({
                "key": g.key,
                "cells": cells,
                "cohort_size": if suppressed { json!("SUPPRESSED") } else { json!(g.rows.len()) },
            })
        })
        .collect();
    json!({
        "group_key_columns": prog.group_by.iter().map(|&i| data.columns[i].name.clone()).collect::<Vec<_>>(),
        "value_columns": prog.aggs.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
        "rows": rows,
    })
}

/// Whether `subject` consents under `rules`: some applicable allow and no applicable deny.
pub fn consents(rules: &[GenRule], subject: &str, querier: &PrincipalId, algorithm_id: Uuid, dataset_id: Uuid, now: i64) -> bool {
    let mut allow = false;
    for r in rules {
        if r.subject != subject || r.revoked || r.dataset_id != dataset_id {
            continue;
        }
        if r.expires_at.is_some_and(|e| now >= e) {
            continue;
        }
        if r.algorithm.is_some_and(|a| a != algorithm_id) {
            continue;
        }
        if r.querier.as_ref().is_some_and(|q| q != querier) {
            continue;
        }
        if !r.allow {
            return false;
        }
        allow = true;
    }
    allow
}

pub fn row_mask(data: &GenData, rules: &[GenRule], querier: &PrincipalId, algorithm_id: Uuid, dataset_id: Uuid, now: i64) -> Vec<bool> {
    (0..data.rows.len()).map(|i| consents(rules, data.subject_of(i), querier, algorithm_id, dataset_id, now)).collect()
}

/// At least one subject named by any rule consents.
pub fn token_issuable(rules: &[GenRule], querier: &PrincipalId, algorithm_id: Uuid, dataset_id: Uuid, now: i64) -> bool {
    rules.iter().any(|r| consents(rules, &r.subject, querier, algorithm_id, dataset_id, now))
}

/// Canonical text of a JSON value, written from scratch.
pub fn reference_canonical(v: &Json) -> String {
    fn string(s: &str, out: &mut String) {
        out.push('"');
        for c in s.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                '\u{8}' => out.push_str("\\b"),
                '\u{c}' => out.push_str("\\f"),
                c if c < ' ' => out.push_str(&format!("\\u{:04x}", c as u32)),
                c => out.push(c),
            }
        }
        out.push('"');
    }
    fn go(v: &Json, out: &mut String) {
        match v {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Number(n) => {
                if let Some(i) = n.as_i64() {
                    out.push_str(&i.to_string())
                } else if let Some(u) = n.as_u64() {
                    out.push_str(&u.to_string())
                } else {
                    let f = n.as_f64().unwrap();
                    if f == 0.0 {
                        out.push('0')
                    } else {
                        out.push_str(&format!("{f}"))
                    }
                }
            }
            Json::String(s) => string(s, out),
            Json::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    go(item, out);
                }
                out.push(']');
            }
            Json::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    string(k, out);
                    out.push(':');
                    go(&map[k], out);
                }
                out.push('}');
            }
        }
    }
    let mut out = String::new();
    go(v, &mut out);
    out
}

/// sha256(prev ‖ canonical(record without this_hash)), from the record's JSON form.
pub fn chain_hash(record: &Json) -> String {
    let mut body = record.clone();
    let prev = hex::decode(body["prev_hash"].as_str().unwrap()).unwrap();
    body.as_object_mut().unwrap().remove("this_hash");
    let mut h = Sha256::new();
    h.update(&prev);
    h.update(reference_canonical(&body).as_bytes());
    hex::encode(h.finalize())
}

/// |a △ b| by materialising both sets.
pub fn symmetric_difference(a: &[usize], b: &[usize]) -> usize {
    let a: std::collections::HashSet<_> = a.iter().collect();
    let b: std::collections::HashSet<_> = b.iter().collect();
    a.symmetric_difference(&b).count()
}
