//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chronoforge_core::deploy::{generate_predictions, DeploymentBundle};
use chronoforge_core::entityset::{load_entityset, Value};
use chronoforge_core::features::{calculate_feature_matrix, create_features, DfsParams, FeatureMatrix, Primitive};
use chronoforge_core::labels::{
    apply_labeling_function, search_training_examples, BuiltinLabeler, Label, LabelSearchParams, Strategy,
};
use chronoforge_core::metadata::parse_metadata;
use chronoforge_core::model::{
    compute_metrics, search_model, tune_threshold, Budget, BuiltinCost, CostFunction, MethodEntry, MethodSpec,
    ResultRecord, SearchParams, Splits,
};
use chronoforge_core::pipeline::{Pipeline, RunConfig};
use chronoforge_core::provenance::{check_drift, validate_provenance, DriftEntry};
use chronoforge_core::time::{Duration, Timestamp};

use common::*;

type Outcome = Result<String, String>;

/// 2100-01-01T00:00:00Z
const FAR_FUTURE: i64 = 4_102_444_800;

fn all_primitives(target: &str, depth: usize, window: Option<i64>) -> DfsParams {
    let mut p = DfsParams::new(target);
    for prim in Primitive::ALL {
        match prim.kind() {
            chronoforge_core::features::PrimitiveKind::Aggregation => p.aggregation_primitives.push(prim.name().into()),
            chronoforge_core::features::PrimitiveKind::Transform => p.transform_primitives.push(prim.name().into()),
        }
    }
    p.max_depth = depth;
    p.training_window = window.map(Duration::from_days);
    p
}

fn random_cutoffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<i64> {
    (0..n)
        .map(|_| EPOCH + rng.random_range(-5..65) * DAY + rng.random_range(0..4) * 6 * 3600)
        .collect()
}

/// View-based computation against hard truncation of the raw rows.
fn point_in_time() -> Outcome {
    let start = Instant::now();
    let mut cells = 0usize;
    let mut violations = Vec::new();
    for seed in 0..200u64 {
        let world = World::random(seed);
        let es = world.entityset();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
        let window = rng.random_bool(0.25).then(|| rng.random_range(1..30));
        let params = all_primitives(world.target(), rng.random_range(1..=3), window);
        let fl = create_features(&es, &params).map_err(|e| format!("seed {seed}: {e}"))?;
        for cutoff in random_cutoffs(&mut rng, 3) {
            let c = Timestamp::from_seconds(cutoff);
            let ids: Vec<String> = world.ents[0].rows.iter().map(|r| r.id.clone()).collect();
            let rows: Vec<(String, Timestamp)> = ids.iter().map(|id| (id.clone(), c)).collect();
            let view = calculate_feature_matrix(&es, world.target(), &rows, &fl, params.training_window.as_ref())
                .map_err(|e| format!("seed {seed}: {e}"))?;
            let truncated_world = world.truncate(cutoff);
            let truncated = truncated_world.entityset();
            let alive: Vec<String> = truncated_world.ents[0].rows.iter().map(|r| r.id.clone()).collect();
            let alive_rows: Vec<(String, Timestamp)> = alive.iter().map(|id| (id.clone(), c)).collect();
            // Without a training window the truncated set is evaluated with
            // no effective cutoff at all; with one, the window still needs
            // the real cutoff as its anchor.
            let hard_rows: Vec<(String, Timestamp)> = match params.training_window {
                None => alive
                    .iter()
                    .map(|id| (id.clone(), Timestamp::from_seconds(FAR_FUTURE)))
                    .collect(),
                Some(_) => alive_rows,
            };
            let hard = if hard_rows.is_empty() {
                None
            } else {
                Some(
                    calculate_feature_matrix(
                        &truncated,
                        world.target(),
                        &hard_rows,
                        &fl,
                        params.training_window.as_ref(),
                    )
                    .map_err(|e| format!("seed {seed}: {e}"))?,
                )
            };
            for (i, id) in ids.iter().enumerate() {
                let expect: Vec<Value> = match alive.iter().position(|a| a == id) {
                    Some(j) => hard.as_ref().expect("alive rows").values[j].clone(),
                    None => vec![Value::Null; fl.len()],
                };
                for (k, (got, want)) in view.values[i].iter().zip(&expect).enumerate() {
                    cells += 1;
                    if got != want {
                        violations.push(format!(
                            "seed {seed} cutoff {c} {id} {}: {got:?} vs {want:?}",
                            view.feature_names[k]
                        ));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if !violations.is_empty() {
        return Err(format!("{} violations, first: {}", violations.len(), violations[0]));
    }
    if secs >= 60.0 {
        return Err(format!("0 violations but took {secs:.1}s"));
    }
    Ok(format!("0 violations over {cells} cells, {secs:.1}s"))
}

fn random_labeler(rng: &mut ChaCha8Rng, entity: &str) -> BuiltinLabeler {
    match rng.random_range(0..3) {
        0 => BuiltinLabeler::ExistsEvent { entity: entity.into() },
        1 => BuiltinLabeler::CountEventsThreshold {
            entity: entity.into(),
            threshold: rng.random_range(1..4),
        },
        _ => BuiltinLabeler::SumColumnThreshold {
            entity: entity.into(),
            column: "x".into(),
            threshold: rng.random_range(-50.0..50.0),
        },
    }
}

fn oracle_label(world: &World, f: &BuiltinLabeler, id: &str, start: i64, end: i64) -> bool {
    match f {
        BuiltinLabeler::ExistsEvent { entity } => !window_events(world, id, entity, start, end).is_empty(),
        BuiltinLabeler::CountEventsThreshold { entity, threshold } => {
            window_events(world, id, entity, start, end).len() >= *threshold
        }
        BuiltinLabeler::SumColumnThreshold {
            entity,
            column,
            threshold,
        } => {
            let e = world.entity_index(entity);
            let total: f64 = window_events(world, id, entity, start, end)
                .into_iter()
                .filter_map(|q| match world.ents[e].rows[q].cols.get(column) {
                    Some(OVal::Num(x)) => Some(*x),
                    _ => None,
                })
                .sum();
            total >= *threshold
        }
    }
}

/// Removes or rewrites every event outside `[start, end)`.
fn perturb_outside(world: &World, start: i64, end: i64, delete: bool, seed: u64) -> World {
    let outside = |e: usize, r: usize| world.effective_time(e, r).is_some_and(|t| t < start || t >= end);
    if delete {
        let drop: Vec<BTreeSet<String>> = (0..world.ents.len())
            .map(|e| {
                (0..world.ents[e].rows.len())
                    .filter(|&r| e > 0 && outside(e, r))
                    .map(|r| world.ents[e].rows[r].id.clone())
                    .collect()
            })
            .collect();
        return world.retain(|e, row| !drop[e].contains(&row.id));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = world.clone();
    for e in 1..world.ents.len() {
        for r in 0..world.ents[e].rows.len() {
            if outside(e, r) {
                out.ents[e].rows[r].cols.insert(
                    "x".into(),
                    OVal::Num((rng.random_range(-1e4..1e4f64) * 100.0).round() / 100.0),
                );
            }
        }
    }
    out
}

fn label_non_leakage() -> Outcome {
    let mut violations: Vec<String> = Vec::new();
    let mut checked = 0usize;
    let mut searches = 0usize;
    let mut seed = 0u64;
    while searches < 100 {
        seed += 1;
        let world = World::random(10_000 + seed);
        let timed: Vec<usize> = (1..world.ents.len())
            .filter(|&e| world.ents[e].time_col.is_some())
            .collect();
        if timed.is_empty() {
            continue;
        }
        searches += 1;
        let es = world.entityset();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entity = world.ents[timed[rng.random_range(0..timed.len())]].name.clone();
        let f = random_labeler(&mut rng, &entity);
        let mut p = LabelSearchParams::new(
            Duration::from_days(rng.random_range(1..20)),
            Duration::from_days(rng.random_range(1..10)),
        );
        p.lead = Duration::from_days(rng.random_range(0..5));
        p.gap = Duration::from_days(rng.random_range(0..15));
        p.examples_per_instance = rng.random_bool(0.5).then(|| rng.random_range(1..4));
        p.min_training_data = Duration::from_days(if rng.random_bool(0.5) {
            0
        } else {
            rng.random_range(1..20)
        });
        p.strategy = if rng.random_bool(0.5) {
            Strategy::Random
        } else {
            Strategy::Fixed
        };
        p.seed = rng.random();
        let (start, end) = (EPOCH - 5 * DAY, EPOCH + 65 * DAY);
        let lt = search_training_examples(
            &es,
            &f,
            world.target(),
            &p,
            Timestamp::from_seconds(start),
            Timestamp::from_seconds(end),
        )
        .map_err(|e| format!("search {seed}: {e}"))?;
        let (pw, offset, lead, gap, mtd) = (
            p.prediction_window.seconds(),
            p.offset.seconds(),
            p.lead.seconds(),
            p.gap.seconds(),
            p.min_training_data.seconds(),
        );
        let mut fail = |m: String| violations.push(format!("search {seed}: {m}"));
        for inst in &world.ents[0].rows {
            let mine: Vec<(i64, bool)> = lt
                .rows
                .iter()
                .filter(|r| r.instance_id == inst.id)
                .map(|r| (r.cutoff_time.seconds(), r.label == Label::Bool(true)))
                .collect();
            if let Some(cap) = p.examples_per_instance {
                if mine.len() > cap {
                    fail(format!("{} has {} examples, cap {cap}", inst.id, mine.len()));
                }
            }
            for (i, a) in mine.iter().enumerate() {
                for b in &mine[i + 1..] {
                    if (a.0 - b.0).abs() < gap {
                        fail(format!("{} cutoffs {} and {} closer than gap", inst.id, a.0, b.0));
                    }
                }
            }
            let first = first_event(&world, &inst.id);
            for &(cutoff, label) in &mine {
                checked += 1;
                let t = cutoff + lead;
                if t < start || (t - start) % offset != 0 || t + pw > end {
                    fail(format!("{} window start {t} is off the grid", inst.id));
                }
                if mtd > 0 && first.is_none_or(|f| cutoff - f < mtd) {
                    fail(format!("{} cutoff {cutoff} lacks min_training_data", inst.id));
                }
                if oracle_label(&world, &f, &inst.id, t, t + pw) != label {
                    fail(format!("{} label at {t} disagrees with the oracle", inst.id));
                }
            }
            if p.strategy == Strategy::Fixed {
                let mut expect: Vec<i64> = Vec::new();
                let mut t = start;
                while t + pw <= end {
                    let cutoff = t - lead;
                    let cap_ok = p.examples_per_instance.is_none_or(|c| expect.len() < c);
                    let mtd_ok = mtd == 0 || first.is_some_and(|f| cutoff - f >= mtd);
                    let gap_ok = expect.iter().all(|&c| (cutoff - c).abs() >= gap);
                    if cap_ok && mtd_ok && gap_ok {
                        expect.push(cutoff);
                    }
                    t += offset;
                }
                let got: Vec<i64> = mine.iter().map(|m| m.0).collect();
                if got != expect {
                    fail(format!("{} emitted {got:?}, greedy oracle {expect:?}", inst.id));
                }
            }
        }
        // perturbation: the label of a sample of examples must survive any
        // change to events outside its window
        let mut sample: Vec<usize> = (0..lt.rows.len()).collect();
        sample.shuffle(&mut rng);
        for &i in sample.iter().take(4) {
            let row = &lt.rows[i];
            let t = row.cutoff_time.seconds() + lead;
            for delete in [true, false] {
                let w2 = perturb_outside(&world, t, t + pw, delete, seed * 31 + i as u64);
                let (label, _) = apply_labeling_function(
                    &w2.entityset(),
                    &f,
                    world.target(),
                    &row.instance_id,
                    Timestamp::from_seconds(t),
                    &p,
                )
                .map_err(|e| format!("search {seed}: {e}"))?;
                checked += 1;
                if label.as_ref() != Some(&row.label) {
                    violations.push(format!(
                        "search {seed}: {} at {t} changed to {label:?} after perturbing outside the window",
                        row.instance_id
                    ));
                }
            }
        }
    }
    match violations.first() {
        None => Ok(format!("0 violations over {searches} searches, {checked} checks")),
        Some(v) => Err(format!("{} violations, first: {v}", violations.len())),
    }
}

fn compare_with_oracle(
    label: &str,
    world: &World,
    es: &chronoforge_core::entityset::EntitySet,
    params: &DfsParams,
    cutoffs: &[i64],
) -> Result<(usize, Vec<String>), String> {
    let fl = create_features(es, params).map_err(|e| format!("{label}: {e}"))?;
    let ids: Vec<String> = world.ents[0].rows.iter().map(|r| r.id.clone()).collect();
    let mut cells = 0;
    let mut bad = Vec::new();
    for &cutoff in cutoffs {
        let c = Timestamp::from_seconds(cutoff);
        let rows: Vec<(String, Timestamp)> = ids.iter().map(|id| (id.clone(), c)).collect();
        let m = calculate_feature_matrix(es, world.target(), &rows, &fl, params.training_window.as_ref())
            .map_err(|e| format!("{label}: {e}"))?;
        let oracle = FeatureOracle {
            world,
            cutoff,
            lower: params.training_window.as_ref().map(|w| cutoff - w.seconds()),
        };
        for (i, id) in ids.iter().enumerate() {
            let want = oracle.row(&fl.features, id);
            for (k, f) in fl.features.iter().enumerate() {
                cells += 1;
                if !cell_matches(&m.values[i][k], &want[k], 1e-9, is_count(f)) {
                    bad.push(format!(
                        "{label} cutoff {c} {id} {f}: {:?} vs oracle {:?}",
                        m.values[i][k], want[k]
                    ));
                }
            }
        }
    }
    Ok((cells, bad))
}

fn dfs_oracle() -> Outcome {
    let mut cells = 0;
    let mut bad = Vec::new();
    let retail = World::retail_tiny();
    let dir = fixtures_dir().join("retail_tiny");
    let meta = parse_metadata(&std::fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap();
    let es = load_entityset(&dir, &meta).map_err(|e| e.to_string())?;
    let cutoffs: Vec<i64> = ["2014-01-01", "2014-01-06", "2014-01-21", "2014-02-11", "2014-03-01"]
        .iter()
        .map(|s| ts(s).seconds())
        .collect();
    for window in [None, Some(10), Some(30)] {
        let (n, b) = compare_with_oracle(
            "retail_tiny",
            &retail,
            &es,
            &all_primitives("customers", 2, window),
            &cutoffs,
        )?;
        cells += n;
        bad.extend(b);
    }
    for seed in 0..50u64 {
        let world = World::random(50_000 + seed);
        let es = world.entityset();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = rng.random_bool(0.4).then(|| rng.random_range(1..30));
        let params = all_primitives(world.target(), rng.random_range(1..=3), window);
        let (n, b) = compare_with_oracle(
            &format!("fixture {seed}"),
            &world,
            &es,
            &params,
            &random_cutoffs(&mut rng, 3),
        )?;
        cells += n;
        bad.extend(b);
    }
    match bad.first() {
        None => Ok(format!("{cells} cells match the oracle")),
        Some(b) => Err(format!("{} mismatches, first: {b}", bad.len())),
    }
}

/// Weighted misclassification cost with weights chosen by the test.
struct TestCost {
    fp: f64,
    fn_: f64,
}

impl CostFunction for TestCost {
    fn name(&self) -> String {
        "test_cost".into()
    }

    fn cost(&self, decisions: &[bool], labels: &[bool], _row_data: &[f64]) -> f64 {
        decisions
            .iter()
            .zip(labels)
            .map(|(&d, &l)| match (d, l) {
                (true, false) => self.fp,
                (false, true) => self.fn_,
                _ => 0.0,
            })
            .sum()
    }
}

fn oracle_cost(kind: usize, w: (f64, f64), scores: &[f64], labels: &[bool], theta: f64) -> f64 {
    let (tp, fp, _tn, fn_) = confusion(scores, labels, theta);
    match kind {
        0 => {
            let d = 2 * tp + fp + fn_;
            if d == 0 {
                0.0
            } else {
                1.0 - 2.0 * tp as f64 / d as f64
            }
        }
        1 => (w.0 * fp as f64 + w.1 * fn_ as f64) / scores.len() as f64,
        _ => w.0 * fp as f64 + w.1 * fn_ as f64,
    }
}

fn threshold_optimality() -> Outcome {
    let (theta, cost) = tune_threshold(&BuiltinCost::F1Cost, &[0.9, 0.4, 0.2], &[true, true, false], &[], 0.001);
    if theta != 0.201 || cost != 0.0 {
        return Err(format!("worked example gave θ={theta}, cost={cost}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let n = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                if rng.random_bool(0.3) {
                    (s * 1000.0).round() / 1000.0
                } else {
                    s
                }
            })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let kind = rng.random_range(0..3);
        let w = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
        let (theta, cost) = match kind {
            0 => tune_threshold(&BuiltinCost::F1Cost, &scores, &labels, &[], 0.001),
            1 => tune_threshold(
                &BuiltinCost::WeightedCost {
                    fp_weight: w.0,
                    fn_weight: w.1,
                },
                &scores,
                &labels,
                &[],
                0.001,
            ),
            _ => tune_threshold(&TestCost { fp: w.0, fn_: w.1 }, &scores, &labels, &[], 0.001),
        };
        let scan: Vec<(f64, f64)> = (0..=1000)
            .map(|i| {
                let th = i as f64 / 1000.0;
                (th, oracle_cost(kind, w, &scores, &labels, th))
            })
            .collect();
        let min = scan.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * min.abs().max(1.0);
        let lowest = scan.iter().find(|s| s.1 <= min + tol).expect("non-empty grid").0;
        if (cost - min).abs() > tol || theta != lowest {
            return Err(format!(
                "trial {trial}: returned θ={theta} cost={cost}, exhaustive scan gives θ={lowest} cost={min}"
            ));
        }
    }
    Ok("worked example θ*=0.201 cost 0; 100 random triples at the grid minimum".into())
}

fn metric_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
        _ => false,
    };
    for trial in 0..1000 {
        let n = rng.random_range(1..=50);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(0..5) as f64 / 4.0
                } else {
                    rng.random()
                }
            })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let theta: f64 = rng.random();
        let m = compute_metrics(&scores, &labels, theta);
        let (tp, fp, tn, fn_) = confusion(&scores, &labels, theta);
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let ok = close(m.precision, ratio(tp, tp + fp))
            && close(m.recall, ratio(tp, tp + fn_))
            && close(m.fpr, ratio(fp, fp + tn))
            && close(m.auc, pairwise_auc(&scores, &labels));
        if !ok {
            return Err(format!("trial {trial}: {m:?} vs tp={tp} fp={fp} tn={tn} fn={fn_}"));
        }
    }
    let record = ResultRecord {
        random_seed: 0,
        threshold: 0.5,
        precision: Some(1.0),
        recall: Some(1.0),
        fpr: Some(0.0),
        auc: Some(1.0),
    };
    let v = serde_json::to_value(&record).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let want: BTreeSet<&str> = ["random_seed", "threshold", "precision", "recall", "fpr", "auc"].into();
    if keys != want {
        return Err(format!("results record fields {keys:?}"));
    }
    Ok("1000 instances within 1e-12; results field set verbatim".into())
}

struct EndToEnd {
    dir: PathBuf,
    test_scores: Vec<f64>,
    secs: f64,
}

fn run_config() -> RunConfig {
    RunConfig::load(&fixtures_dir().join("run_retail_tiny.json")).unwrap()
}

fn end_to_end(dir: &Path) -> Result<EndToEnd, String> {
    let start = Instant::now();
    let p = Pipeline::new(run_config(), dir.to_path_buf()).map_err(|e| e.to_string())?;
    p.labels().map_err(|e| format!("labels: {e}"))?;
    p.features().map_err(|e| format!("features: {e}"))?;
    let trained = p.train().map_err(|e| format!("train: {e}"))?;
    let report = p.test().map_err(|e| format!("test: {e}"))?;
    if !report.passed {
        return Err(format!("integration test failed: {:?}", report.steps));
    }
    p.validate().map_err(|e| format!("validate: {e}"))?;
    p.predict().map_err(|e| format!("predict: {e}"))?;
    Ok(EndToEnd {
        dir: dir.to_path_buf(),
        test_scores: trained.test_scores,
        secs: start.elapsed().as_secs_f64(),
    })
}

fn test_rows(dir: &Path) -> Vec<(String, Timestamp)> {
    let lt = chronoforge_core::labels::LabelTimes::read_csv(&dir.join("label_times_test.csv"), "customers").unwrap();
    lt.rows.into_iter().map(|r| (r.instance_id, r.cutoff_time)).collect()
}

fn train_deploy_equivalence(e2e: &Result<EndToEnd, String>) -> Outcome {
    let e2e = e2e.as_ref().map_err(Clone::clone)?;
    let prov_path = e2e.dir.join("model_provenance.json");
    let text = std::fs::read_to_string(&prov_path).map_err(|e| e.to_string())?;
    let doc = validate_provenance(&text).map_err(|e| format!("provenance invalid: {e}"))?;
    if doc.emit() != text {
        return Err("provenance does not round-trip byte for byte".into());
    }
    let bundle = DeploymentBundle::load(&prov_path).map_err(|e| e.to_string())?;
    let cfg = run_config();
    let es = load_entityset(&cfg.data_dir, &bundle.metadata).map_err(|e| e.to_string())?;
    let rows = test_rows(&e2e.dir);
    let m = bundle.feature_matrix(&es, &rows).map_err(|e| e.to_string())?;
    let deployed: Vec<f64> = generate_predictions(&bundle, &m)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| p.score)
        .collect();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    if bits(&deployed) != bits(&e2e.test_scores) {
        return Err(format!(
            "deployed scores {deployed:?} differ from training {:?}",
            e2e.test_scores
        ));
    }
    let validation: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(e2e.dir.join("validation_report.json")).unwrap()).unwrap();
    let replayed: Vec<f64> = validation["validation"]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["score"].as_f64().unwrap())
        .collect();
    if bits(&replayed) != bits(&e2e.test_scores) {
        return Err("production validation scores differ from training".into());
    }
    if e2e.secs >= 120.0 {
        return Err(format!("end-to-end run took {:.1}s", e2e.secs));
    }
    Ok(format!(
        "{} test scores bitwise equal; provenance valid and round-trips; {:.2}s end to end",
        deployed.len(),
        e2e.secs
    ))
}

fn cli_run(dir: &Path, jobs: usize) -> Result<(), String> {
    let config = fixtures_dir().join("run_retail_tiny.json");
    for cmd in ["labels", "features", "train", "test", "validate", "predict"] {
        let out = Command::new(env!("CARGO_BIN_EXE_chronoforge"))
            .arg("--config")
            .arg(&config)
            .arg("--output-dir")
            .arg(dir)
            .args(["--jobs", &jobs.to_string(), cmd])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("`{cmd}` failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn without_elapsed(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"elapsed\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [
        (tmp.path().join("a"), 1),
        (tmp.path().join("b"), 8),
        (tmp.path().join("c"), 1),
    ];
    for (dir, jobs) in &runs {
        cli_run(dir, *jobs)?;
    }
    let mut names: Vec<String> = std::fs::read_dir(&runs[0].0)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for required in [
        "label_times_train.csv",
        "feature_matrix_test.csv",
        "leaderboard.csv",
        "model.json",
    ] {
        if !names.iter().any(|n| n == required) {
            return Err(format!("{required} was not written"));
        }
    }
    let mut elapsed_lines = 0;
    for name in &names {
        let a = std::fs::read_to_string(runs[0].0.join(name)).unwrap();
        for (dir, jobs) in &runs[1..] {
            let b = std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
            let same = if name == "model_provenance.json" {
                elapsed_lines = a.lines().filter(|l| l.trim_start().starts_with("\"elapsed\"")).count();
                without_elapsed(&a) == without_elapsed(&b)
            } else {
                a == b
            };
            if !same {
                return Err(format!("{name} differs between --jobs 1 and --jobs {jobs}"));
            }
        }
    }
    if elapsed_lines != 1 {
        return Err(format!(
            "expected one timing field in provenance, found {elapsed_lines}"
        ));
    }
    Ok(format!(
        "{} artifacts byte-identical across 3 runs (--jobs 1/8/1)",
        names.len()
    ))
}

fn separable_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut data: Vec<(Vec<f64>, bool)> = (0..40)
        .map(|i| {
            let pos = i % 2 == 0;
            let (lo, hi) = if pos { (0.6, 1.0) } else { (0.0, 0.4) };
            (vec![rng.random_range(lo..hi), rng.random_range(lo..hi)], pos)
        })
        .collect();
    // shuffle within pairs so every split keeps both classes
    for pair in data.chunks_mut(2) {
        pair.shuffle(&mut rng);
    }
    let names = vec!["a".to_string(), "b".to_string()];
    let part = |lo: usize, hi: usize| {
        let rows: Vec<Vec<f64>> = data[lo..hi].iter().map(|d| d.0.clone()).collect();
        let labels: Vec<bool> = data[lo..hi].iter().map(|d| d.1).collect();
        FeatureMatrix::from_numeric(&names, &rows, Some(&labels))
    };
    let (train, tune, test) = (part(0, 20), part(20, 30), part(30, 40));
    let spec = MethodSpec::parse(&std::fs::read_to_string(fixtures_dir().join("method_spec_dt.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let params = SearchParams::new(
        vec![MethodEntry {
            method_key: "decision_tree".into(),
            spec,
        }],
        Budget::Configurations(5),
    );
    let out = search_model(
        &BuiltinCost::F1Cost,
        None,
        "rows",
        Splits {
            train: &train,
            tune: &tune,
            test: &test,
        },
        &params,
    )
    .map_err(|e| e.to_string())?;
    if out.configurations_evaluated > 5 {
        return Err(format!("{} configurations evaluated", out.configurations_evaluated));
    }
    let scores = out.artifact.predict_scores(&test).map_err(|e| e.to_string())?;
    let labels: Vec<bool> = data[30..40].iter().map(|d| d.1).collect();
    let (tp, fp, _, fn_) = confusion(&scores, &labels, out.artifact.threshold);
    let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    let cost = BuiltinCost::F1Cost.cost(
        &scores.iter().map(|&s| s >= out.artifact.threshold).collect::<Vec<_>>(),
        &labels,
        &[],
    );
    if f1 != 1.0 || cost != 0.0 || out.artifact.mean_test_cost != 0.0 {
        return Err(format!(
            "test F1 {f1}, cost {cost}, mean test cost {}",
            out.artifact.mean_test_cost
        ));
    }
    Ok(format!(
        "F1 = 1, cost 0 after {} configurations",
        out.configurations_evaluated
    ))
}

fn drift_detection(e2e: &Result<EndToEnd, String>) -> Outcome {
    let e2e = e2e.as_ref().map_err(Clone::clone)?;
    let bundle = DeploymentBundle::load(&e2e.dir.join("model_provenance.json")).map_err(|e| e.to_string())?;
    let cfg = run_config();
    let es = load_entityset(&cfg.data_dir, &bundle.metadata).map_err(|e| e.to_string())?;
    let lt = chronoforge_core::labels::LabelTimes::read_csv(&e2e.dir.join("label_times_train.csv"), "customers")
        .map_err(|e| e.to_string())?;
    let rows: Vec<(String, Timestamp)> = lt.rows.into_iter().map(|r| (r.instance_id, r.cutoff_time)).collect();
    let clean = bundle.feature_matrix(&es, &rows).map_err(|e| e.to_string())?;
    let iv = &bundle.provenance.deployment.integration_and_validation;
    let base = check_drift(&bundle.provenance, &clean, Some(&es));
    if !base.is_empty() {
        return Err(format!("training data already drifts: {:?}", base.entries));
    }
    let (feature, range) = iv
        .expected_feature_value_ranges
        .iter()
        .next()
        .ok_or("no expected ranges declared")?;
    let j = clean
        .feature_names
        .iter()
        .position(|n| n == feature)
        .ok_or("ranged feature missing")?;
    let mut injected = clean.clone();
    injected.values[0][j] = Value::Number(range.max + 1.0 + range.max.abs());
    let r1 = check_drift(&bundle.provenance, &injected, Some(&es));
    let one_oor = r1.entries.len() == 1 && matches!(r1.entries[0], DriftEntry::OutOfRange { .. });
    let (entity, var) = ("orders_products".to_string(), "Discount".to_string());
    if !iv.data_fields_used.get(&entity).is_some_and(|vs| vs.contains(&var)) {
        return Err(format!("{entity}.{var} is not among the declared data fields"));
    }
    let dropped = es.drop_variable(&entity, &var).map_err(|e| e.to_string())?;
    let r2 = check_drift(&bundle.provenance, &clean, Some(&dropped));
    let one_missing = r2.entries.len() == 1 && matches!(r2.entries[0], DriftEntry::MissingField { .. });
    if one_oor && one_missing {
        Ok(format!(
            "one OutOfRange for {feature}; one MissingField for {entity}.{var}"
        ))
    } else {
        Err(format!("injected: {:?}; removed: {:?}", r1.entries, r2.entries))
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let e2e = end_to_end(tmp.path());
    let results: Vec<(&str, Outcome)> = vec![
        ("1 point-in-time correctness", point_in_time()),
        ("2 label non-leakage", label_non_leakage()),
        ("3 DFS oracle equivalence", dfs_oracle()),
        ("4 threshold optimality", threshold_optimality()),
        ("5 metric correctness", metric_correctness()),
        ("6 train/deploy equivalence", train_deploy_equivalence(&e2e)),
        ("7 determinism", determinism()),
        ("8 separable-data sanity", separable_sanity()),
        ("9 drift detection", drift_detection(&e2e)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(m) => println!("PASS  {name}: {m}"),
            Err(m) => {
                failed += 1;
                println!("FAIL  {name}: {m}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
