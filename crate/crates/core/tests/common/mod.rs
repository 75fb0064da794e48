//! Random relational fixtures and brute-force oracles shared by the
//! integration targets. The oracles work on the raw generated rows and never
//! call into the crate's indexing or snapshot code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Datelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chronoforge_core::entityset::{EntitySet, RawTable, Value};
use chronoforge_core::features::{AggInput, FeatureDefinition, Primitive};
use chronoforge_core::metadata::parse_metadata;
use chronoforge_core::time::Timestamp;

pub const DAY: i64 = 86_400;
/// 2020-01-01T00:00:00Z
pub const EPOCH: i64 = 1_577_836_800;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Clone)]
pub struct Row {
    pub id: String,
    pub parent: Option<String>,
    pub time: Option<i64>,
    /// Attribute columns; absent means null.
    pub cols: BTreeMap<String, OVal>,
}

#[derive(Debug, Clone)]
pub struct Ent {
    pub name: String,
    pub parent: Option<usize>,
    /// Name of the time index column, if any.
    pub time_col: Option<String>,
    pub rows: Vec<Row>,
}

/// A tree-shaped schema: entity 0 is the root (the prediction target), every
/// other entity has exactly one parent among the earlier ones.
#[derive(Debug, Clone)]
pub struct World {
    pub ents: Vec<Ent>,
}

fn fmt_x(x: f64) -> f64 {
    // two decimals, so the CSV text parses back to the same double
    format!("{x:.2}").parse().unwrap()
}

impl World {
    pub fn random(seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_ents = rng.random_range(2..=6);
        let mut budget: usize = 300;
        let mut ents: Vec<Ent> = Vec::new();
        for e in 0..n_ents {
            let parent = if e == 0 { None } else { Some(rng.random_range(0..e)) };
            let has_time = if e == 0 {
                rng.random_bool(0.4)
            } else {
                rng.random_bool(0.75)
            };
            let max_rows = if e == 0 { 12 } else { 60 };
            let n = rng.random_range(if e == 0 { 3 } else { 0 }..=max_rows).min(budget);
            budget -= n;
            let mut rows = Vec::with_capacity(n);
            for r in 0..n {
                let parent_id = parent.and_then(|p| {
                    let pn = ents[p].rows.len();
                    if pn == 0 || rng.random_bool(0.05) {
                        None
                    } else {
                        Some(ents[p].rows[rng.random_range(0..pn)].id.clone())
                    }
                });
                let time = has_time.then(|| EPOCH + rng.random_range(0..60) * DAY + rng.random_range(0..4) * 6 * 3600);
                let mut cols = BTreeMap::new();
                if !rng.random_bool(0.1) {
                    cols.insert("x".to_string(), OVal::Num(fmt_x(rng.random_range(-100.0..100.0))));
                }
                if !rng.random_bool(0.1) {
                    cols.insert("flag".to_string(), OVal::Bool(rng.random_bool(0.5)));
                }
                if !rng.random_bool(0.1) {
                    cols.insert(
                        "cat".to_string(),
                        OVal::Text(["a", "b", "c"][rng.random_range(0..3)].to_string()),
                    );
                }
                rows.push(Row {
                    id: format!("e{e}r{r}"),
                    parent: parent_id,
                    time,
                    cols,
                });
            }
            ents.push(Ent {
                name: format!("e{e}"),
                parent,
                time_col: has_time.then(|| "t".to_string()),
                rows,
            });
        }
        World { ents }
    }

    /// The customers → orders → order lines chain of retail_tiny, read from
    /// its CSV files. Products hang off order lines as a second parent but
    /// are never reached downward from customers.
    pub fn retail_tiny() -> World {
        let dir = fixtures_dir().join("retail_tiny");
        let read = |file: &str| -> Vec<BTreeMap<String, String>> {
            let mut r = csv::Reader::from_path(dir.join(file)).unwrap();
            let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
            r.records()
                .map(|rec| {
                    header
                        .iter()
                        .cloned()
                        .zip(rec.unwrap().iter().map(str::to_string))
                        .collect()
                })
                .collect()
        };
        let num = |s: &str| {
            if s.is_empty() {
                OVal::Null
            } else {
                OVal::Num(s.parse().unwrap())
            }
        };
        let customers = read("customers.csv")
            .into_iter()
            .map(|m| Row {
                id: m["customer_id"].clone(),
                parent: None,
                time: None,
                cols: [
                    ("age".to_string(), num(&m["age"])),
                    ("zipcode".to_string(), OVal::Text(m["zipcode"].clone())),
                ]
                .into_iter()
                .collect(),
            })
            .collect();
        let orders = read("orders.csv")
            .into_iter()
            .map(|m| Row {
                id: m["Order Id"].clone(),
                parent: Some(m["customer_id"].clone()),
                time: Some(ts(&m["Timestamp"]).seconds()),
                cols: BTreeMap::new(),
            })
            .collect();
        let lines = read("orders_products.csv")
            .into_iter()
            .map(|m| Row {
                id: m["id"].clone(),
                parent: Some(m["Order Id"].clone()),
                time: None,
                cols: [
                    ("Price".to_string(), num(&m["Price"])),
                    ("Discount".to_string(), num(&m["Discount"])),
                ]
                .into_iter()
                .collect(),
            })
            .collect();
        World {
            ents: vec![
                Ent {
                    name: "customers".into(),
                    parent: None,
                    time_col: None,
                    rows: customers,
                },
                Ent {
                    name: "orders".into(),
                    parent: Some(0),
                    time_col: Some("Timestamp".into()),
                    rows: orders,
                },
                Ent {
                    name: "orders_products".into(),
                    parent: Some(1),
                    time_col: None,
                    rows: lines,
                },
            ],
        }
    }

    pub fn target(&self) -> &str {
        &self.ents[0].name
    }

    pub fn metadata_json(&self) -> String {
        let mut entities = Vec::new();
        let mut relationships = Vec::new();
        for ent in &self.ents {
            let mut vars = vec![serde_json::json!({"name": "id", "semantic_type": "index"})];
            if ent.parent.is_some() {
                vars.push(serde_json::json!({"name": "pid", "semantic_type": "id"}));
            }
            if ent.time_col.is_some() {
                vars.push(serde_json::json!({"name": "t", "semantic_type": "time_index"}));
            }
            vars.push(serde_json::json!({"name": "x", "semantic_type": "numeric"}));
            vars.push(serde_json::json!({"name": "flag", "semantic_type": "boolean"}));
            vars.push(serde_json::json!({"name": "cat", "semantic_type": "categorical"}));
            let mut e = serde_json::json!({"name": ent.name, "index": "id", "variables": vars});
            if ent.time_col.is_some() {
                e["time_index"] = "t".into();
            }
            entities.push(e);
            if let Some(p) = ent.parent {
                relationships.push(serde_json::json!({
                    "parent_entity": self.ents[p].name, "parent_variable": "id",
                    "child_entity": ent.name, "child_variable": "pid"
                }));
            }
        }
        serde_json::json!({"entityset_name": "random", "entities": entities, "relationships": relationships})
            .to_string()
    }

    pub fn tables(&self) -> BTreeMap<String, RawTable> {
        let mut out = BTreeMap::new();
        for ent in &self.ents {
            let mut header = vec!["id".to_string()];
            if ent.parent.is_some() {
                header.push("pid".into());
            }
            if ent.time_col.is_some() {
                header.push("t".into());
            }
            header.extend(["x".to_string(), "flag".into(), "cat".into()]);
            let records: Vec<Vec<String>> = ent
                .rows
                .iter()
                .map(|r| {
                    let mut rec = vec![r.id.clone()];
                    if ent.parent.is_some() {
                        rec.push(r.parent.clone().unwrap_or_default());
                    }
                    if ent.time_col.is_some() {
                        rec.push(Timestamp::from_seconds(r.time.unwrap()).to_string());
                    }
                    for c in ["x", "flag", "cat"] {
                        rec.push(match r.cols.get(c) {
                            Some(OVal::Num(x)) => format!("{x:.2}"),
                            Some(OVal::Bool(b)) => b.to_string(),
                            Some(OVal::Text(t)) => t.clone(),
                            _ => String::new(),
                        });
                    }
                    rec
                })
                .collect();
            out.insert(ent.name.clone(), RawTable::new(&header, &records));
        }
        out
    }

    pub fn entityset(&self) -> EntitySet {
        EntitySet::from_tables(parse_metadata(&self.metadata_json()).unwrap(), &self.tables()).unwrap()
    }

    pub fn entity_index(&self, name: &str) -> usize {
        self.ents.iter().position(|e| e.name == name).unwrap()
    }

    fn parent_row(&self, e: usize, r: usize) -> Option<(usize, usize)> {
        let p = self.ents[e].parent?;
        let pid = self.ents[e].rows[r].parent.as_ref()?;
        Some((p, self.ents[p].rows.iter().position(|x| &x.id == pid).unwrap()))
    }

    pub fn effective_time(&self, e: usize, r: usize) -> Option<i64> {
        self.ents[e].rows[r]
            .time
            .or_else(|| self.parent_row(e, r).and_then(|(p, pr)| self.effective_time(p, pr)))
    }

    pub fn exists(&self, e: usize, r: usize, cutoff: i64) -> bool {
        self.ents[e].rows[r].time.is_none_or(|t| t < cutoff)
            && self.parent_row(e, r).is_none_or(|(p, pr)| self.exists(p, pr, cutoff))
    }

    pub fn visible(&self, e: usize, r: usize, cutoff: i64, lower: Option<i64>) -> bool {
        self.exists(e, r, cutoff)
            && match (lower, self.effective_time(e, r)) {
                (Some(lo), Some(t)) => t >= lo,
                _ => true,
            }
    }

    /// Rows of `e` whose parent chain reaches row `r` of `base`, with every
    /// row on the chain (except the base) visible.
    pub fn flatten(&self, base: usize, r: usize, e: usize, cutoff: i64, lower: Option<i64>) -> Vec<usize> {
        (0..self.ents[e].rows.len())
            .filter(|&q| {
                let (mut ce, mut cr) = (e, q);
                loop {
                    if !self.visible(ce, cr, cutoff, lower) {
                        return false;
                    }
                    match self.parent_row(ce, cr) {
                        None => return false,
                        Some((p, pr)) if p == base => return pr == r,
                        Some(next) => (ce, cr) = next,
                    }
                }
            })
            .collect()
    }

    /// Removes rows failing `keep`, cascading to rows whose parent went away.
    pub fn retain(&self, keep: impl Fn(usize, &Row) -> bool) -> World {
        let mut out = self.clone();
        let mut gone: Vec<BTreeSet<String>> = vec![BTreeSet::new(); self.ents.len()];
        for e in 0..self.ents.len() {
            let parent = self.ents[e].parent;
            let mut rows = Vec::new();
            for row in &self.ents[e].rows {
                let orphan = match (parent, &row.parent) {
                    (Some(p), Some(pid)) => gone[p].contains(pid),
                    _ => false,
                };
                if orphan || !keep(e, row) {
                    gone[e].insert(row.id.clone());
                } else {
                    rows.push(row.clone());
                }
            }
            out.ents[e].rows = rows;
        }
        out
    }

    /// Hard truncation at a cutoff: only rows that exist before it.
    pub fn truncate(&self, cutoff: i64) -> World {
        let keep: Vec<BTreeSet<String>> = (0..self.ents.len())
            .map(|e| {
                (0..self.ents[e].rows.len())
                    .filter(|&r| self.exists(e, r, cutoff))
                    .map(|r| self.ents[e].rows[r].id.clone())
                    .collect()
            })
            .collect();
        self.retain(|e, row| keep[e].contains(&row.id))
    }
}

/// Oracle cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum OVal {
    Null,
    Num(f64),
    Bool(bool),
    Text(String),
    Time(i64),
}

impl OVal {
    fn num(&self) -> Option<f64> {
        match self {
            OVal::Num(x) => Some(*x),
            _ => None,
        }
    }
}

pub struct FeatureOracle<'a> {
    pub world: &'a World,
    pub cutoff: i64,
    pub lower: Option<i64>,
}

impl FeatureOracle<'_> {
    fn column(&self, e: usize, r: usize, col: &str) -> OVal {
        let ent = &self.world.ents[e];
        let row = &ent.rows[r];
        if ent.time_col.as_deref() == Some(col) {
            return row.time.map_or(OVal::Null, OVal::Time);
        }
        row.cols.get(col).cloned().unwrap_or(OVal::Null)
    }

    fn percentile(&self, e: usize, r: usize, col: &str, target: usize) -> OVal {
        let population: Vec<(usize, f64)> = (0..self.world.ents[e].rows.len())
            .filter(|&q| {
                if e == target {
                    self.world.exists(e, q, self.cutoff)
                } else {
                    self.world.visible(e, q, self.cutoff, self.lower)
                }
            })
            .filter_map(|q| self.column(e, q, col).num().map(|v| (q, v)))
            .collect();
        let Some(&(_, v)) = population.iter().find(|(q, _)| *q == r) else {
            return OVal::Null;
        };
        let less = population.iter().filter(|(_, w)| *w < v).count() as f64;
        let equal = population.iter().filter(|(_, w)| *w == v).count() as f64;
        // average of the 1-based ranks less+1 ..= less+equal
        OVal::Num((less + (equal + 1.0) / 2.0) / population.len() as f64)
    }

    pub fn eval(&self, f: &FeatureDefinition, base: usize, r: usize, target: usize) -> OVal {
        match f {
            FeatureDefinition::Transform {
                primitive,
                entity,
                column,
            } => {
                let e = self.world.entity_index(entity);
                if *primitive == Primitive::Percentile {
                    return self.percentile(e, r, column, target);
                }
                let OVal::Time(t) = self.column(e, r, column) else {
                    return OVal::Null;
                };
                let d = DateTime::from_timestamp(t, 0).unwrap();
                let wd = d.weekday().num_days_from_monday();
                match primitive {
                    Primitive::Weekend => OVal::Bool(wd >= 5),
                    Primitive::Day => OVal::Num(f64::from(d.day())),
                    Primitive::Month => OVal::Num(f64::from(d.month())),
                    Primitive::Weekday => OVal::Num(f64::from(wd)),
                    other => panic!("unexpected transform {other}"),
                }
            }
            FeatureDefinition::Aggregation {
                primitive,
                entity,
                input,
            } => {
                let e = self.world.entity_index(entity);
                let rows = self.world.flatten(base, r, e, self.cutoff, self.lower);
                let items: Vec<(OVal, Option<i64>)> = rows
                    .iter()
                    .map(|&q| {
                        let v = match input {
                            AggInput::Rows => OVal::Null,
                            AggInput::Column(c) => self.column(e, q, c),
                            AggInput::Feature(inner) => self.eval(inner, e, q, target),
                        };
                        (v, self.world.effective_time(e, q))
                    })
                    .collect();
                aggregate(*primitive, &items)
            }
        }
    }

    /// A whole feature row for one target instance; null when the instance
    /// does not exist yet.
    pub fn row(&self, features: &[FeatureDefinition], instance: &str) -> Vec<OVal> {
        let r = self.world.ents[0].rows.iter().position(|x| x.id == instance).unwrap();
        if !self.world.exists(0, r, self.cutoff) {
            return vec![OVal::Null; features.len()];
        }
        features.iter().map(|f| self.eval(f, 0, r, 0)).collect()
    }
}

fn aggregate(p: Primitive, items: &[(OVal, Option<i64>)]) -> OVal {
    let nums: Vec<f64> = items.iter().filter_map(|(v, _)| v.num()).collect();
    let n = nums.len() as f64;
    let mean = || nums.iter().sum::<f64>() / n;
    match p {
        Primitive::Count => OVal::Num(items.len() as f64),
        Primitive::Sum | Primitive::Mean | Primitive::Min | Primitive::Max | Primitive::Std if nums.is_empty() => {
            OVal::Null
        }
        Primitive::Sum => OVal::Num(nums.iter().sum()),
        Primitive::Mean => OVal::Num(mean()),
        Primitive::Min => OVal::Num(nums.iter().cloned().fold(f64::INFINITY, f64::min)),
        Primitive::Max => OVal::Num(nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        Primitive::Std => {
            let m = mean();
            OVal::Num((nums.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
        }
        Primitive::NumUnique => {
            let mut seen: Vec<&OVal> = Vec::new();
            for (v, _) in items {
                if *v != OVal::Null && !seen.contains(&v) {
                    seen.push(v);
                }
            }
            if seen.is_empty() {
                OVal::Null
            } else {
                OVal::Num(seen.len() as f64)
            }
        }
        Primitive::Percent => {
            let bools: Vec<bool> = items
                .iter()
                .filter_map(|(v, _)| match v {
                    OVal::Bool(b) => Some(*b),
                    _ => None,
                })
                .collect();
            if bools.is_empty() {
                OVal::Null
            } else {
                OVal::Num(bools.iter().filter(|&&b| b).count() as f64 / bools.len() as f64)
            }
        }
        Primitive::Trend => {
            let pts: Vec<(f64, f64)> = items
                .iter()
                .filter_map(|(v, t)| Some(((*t)? as f64, v.num()?)))
                .collect();
            if pts.len() < 2 {
                return OVal::Null;
            }
            let k = pts.len() as f64;
            let tm = pts.iter().map(|p| p.0).sum::<f64>() / k;
            let xm = pts.iter().map(|p| p.1).sum::<f64>() / k;
            let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
            if sxx == 0.0 {
                return OVal::Null;
            }
            OVal::Num(pts.iter().map(|p| (p.0 - tm) * (p.1 - xm)).sum::<f64>() / sxx)
        }
        other => panic!("{other} is not an aggregation"),
    }
}

/// `Ok` when the crate's cell agrees with the oracle: equal nulls and
/// booleans, numbers within `rel` relative tolerance (exact for counts).
pub fn cell_matches(got: &Value, want: &OVal, rel: f64, exact: bool) -> bool {
    match (got, want) {
        (Value::Null, OVal::Null) => true,
        (Value::Bool(a), OVal::Bool(b)) => a == b,
        (Value::Number(a), OVal::Num(b)) => {
            if exact {
                a == b
            } else {
                a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
            }
        }
        _ => false,
    }
}

pub fn is_count(f: &FeatureDefinition) -> bool {
    matches!(
        f,
        FeatureDefinition::Aggregation {
            primitive: Primitive::Count | Primitive::NumUnique,
            ..
        }
    )
}

/// Events of `entity` for `instance` inside `[start, end)`, by the same
/// exists/visible rules as features evaluated at `end` with lower bound `start`.
pub fn window_events(world: &World, instance: &str, entity: &str, start: i64, end: i64) -> Vec<usize> {
    let r = world.ents[0].rows.iter().position(|x| x.id == instance).unwrap();
    let e = world.entity_index(entity);
    if e == 0 {
        return if world.visible(0, r, end, Some(start)) {
            vec![r]
        } else {
            vec![]
        };
    }
    world.flatten(0, r, e, end, Some(start))
}

/// Earliest effective time over the instance's row and all its descendants.
pub fn first_event(world: &World, instance: &str) -> Option<i64> {
    let r = world.ents[0].rows.iter().position(|x| x.id == instance).unwrap();
    let mut best = world.effective_time(0, r);
    for e in 1..world.ents.len() {
        for q in world.flatten(0, r, e, i64::MAX, None) {
            if let Some(t) = world.effective_time(e, q) {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        }
    }
    best
}

pub fn ts(s: &str) -> Timestamp {
    Timestamp::parse(s).unwrap()
}

/// Brute-force confusion counts at `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (s, l) in scores.iter().zip(labels) {
        match (*s >= threshold, *l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    (tp, fp, tn, fn_)
}

/// Pairwise AUC: P(score_pos > score_neg) + 0.5 P(tie).
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}
