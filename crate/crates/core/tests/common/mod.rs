//! Brute-force oracles and acceptance checks shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use popbias::corpus::{
    compute_popularity, generate_synthetic, long_tail_stats, read_interactions, split_mask,
    InteractionDataset, SyntheticConfig,
};
use popbias::harness::{
    evaluate, gapcalc, parse_records, prepare, render_kv, run_experiment, ExperimentConfig,
    ExperimentReport, GroupSummary, Measure,
};
use popbias::metrics::{auc, average_precision_at_k, RankedCandidates};
use popbias::model::PerfectOracle;
use popbias::multivae::{gaussian_kl, MultiVaeModel, MultiVaeParams};
use popbias::slim::{fit_column_traced, SlimParams};
use popbias::wrmf::{fit_wrmf_traced, wrmf_objective, WrmfModel, WrmfParams};

pub type Check = Result<String, String>;

// ---------------------------------------------------------------- metrics

/// Does candidate `a` rank above `b` (descending score, then ascending index)?
fn beats(scores: &[f64], a: u32, b: u32) -> bool {
    let (sa, sb) = (scores[a as usize], scores[b as usize]);
    sa > sb || (sa == sb && a < b)
}

pub fn brute_auc(scores: &[f64], candidates: &[u32], positives: &[u32]) -> Option<f64> {
    let negatives: Vec<u32> = candidates
        .iter()
        .copied()
        .filter(|c| !positives.contains(c))
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    for &p in positives {
        for &n in &negatives {
            if beats(scores, p, n) {
                hits += 1;
            }
        }
    }
    Some(hits as f64 / (positives.len() * negatives.len()) as f64)
}

pub fn brute_ap(scores: &[f64], candidates: &[u32], positives: &[u32], k: usize) -> Option<f64> {
    if positives.is_empty() || positives.len() == candidates.len() {
        return None;
    }
    let rank = |c: u32| 1 + candidates.iter().filter(|&&o| o != c && beats(scores, o, c)).count();
    let mut sum = 0.0;
    for &p in positives {
        let r = rank(p);
        if r <= k {
            let above = positives.iter().filter(|&&q| rank(q) <= r).count();
            sum += above as f64 / r as f64;
        }
    }
    Some(sum / k.min(positives.len()) as f64)
}

/// Random scores with frequent ties, a random exclusion set and random positives.
pub struct MetricInstance {
    pub scores: Vec<f64>,
    pub exclude: Vec<u32>,
    pub candidates: Vec<u32>,
    pub positives: Vec<u32>,
    pub k: usize,
}

pub fn metric_instance(rng: &mut ChaCha8Rng) -> MetricInstance {
    let n = rng.random_range(2..=60usize);
    let levels = rng.random_range(1..=8u32);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
    let mut exclude = Vec::new();
    let mut candidates = Vec::new();
    for i in 0..n as u32 {
        if candidates.len() < 50 && rng.random_bool(0.8) {
            candidates.push(i);
        } else {
            exclude.push(i);
        }
    }
    let positives: Vec<u32> = candidates.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
    let k = rng.random_range(1..=candidates.len().max(1) + 3);
    MetricInstance {
        scores,
        exclude,
        candidates,
        positives,
        k,
    }
}

pub fn compare_metrics(inst: &MetricInstance) -> Result<(), String> {
    let ranked = RankedCandidates::from_scores(&inst.scores, &inst.exclude, inst.positives.clone())
        .map_err(|e| e.to_string())?;
    let a = auc(&ranked).ok();
    let b = brute_auc(&inst.scores, &inst.candidates, &inst.positives);
    if a != b {
        return Err(format!("auc {a:?} vs brute {b:?}"));
    }
    let a = average_precision_at_k(&ranked, inst.k).ok();
    let b = brute_ap(&inst.scores, &inst.candidates, &inst.positives, inst.k);
    match (a, b) {
        (None, None) => Ok(()),
        (Some(x), Some(y)) if (x - y).abs() <= 1e-12 => Ok(()),
        _ => Err(format!("ap@{} {a:?} vs brute {b:?}", inst.k)),
    }
}

pub fn check_metric_oracles(instances: usize) -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..instances {
        compare_metrics(&metric_instance(&mut rng)).map_err(|e| format!("instance {i}: {e}"))?;
    }
    let secs = t.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!("{instances} instances agree, {secs:.2}s"))
}

// ---------------------------------------------------------------- harness

pub fn synthetic_config(models: &str, users: usize, artists: usize, seed: u64, extra: &str) -> ExperimentConfig {
    let text = format!(
        "seed = {seed}\n{extra}\n[data.synthetic]\nnum_users = {users}\nnum_artists = {artists}\nzipf_exponent = 1.0\n{models}"
    );
    ExperimentConfig::parse(&text, Path::new(".")).expect("valid test config")
}

pub fn model_block(kind: &str, params: &str) -> String {
    if params.is_empty() {
        format!("[[models]]\nkind = \"{kind}\"\n")
    } else {
        format!("[[models]]\nkind = \"{kind}\"\nparams = {{ {params} }}\n")
    }
}

pub fn group<'a>(report: &'a ExperimentReport, model: &str, g: usize) -> &'a GroupSummary {
    &report
        .models
        .iter()
        .find(|m| m.name == model)
        .unwrap_or_else(|| panic!("model {model} missing"))
        .groups[g]
}

pub fn check_random_baseline() -> Check {
    let t = Instant::now();
    let cfg = synthetic_config(&model_block("random", ""), 500, 2000, 1, "");
    let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let all = group(&r, "random", 0);
    let auc = all.auc_mean.ok_or("no AUC")?;
    let dg = all.delta_gap.ok_or("no delta GAP")?;
    let secs = t.elapsed().as_secs_f64();
    let detail = format!("mean AUC {auc:.4}, delta GAP {dg:.4}, {secs:.1}s");
    if (auc - 0.5).abs() <= 0.02 && dg < 0.0 && secs < 30.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn check_perfect_oracle() -> Check {
    let cfg = synthetic_config(&model_block("random", ""), 300, 1000, 9, "");
    let data = prepare(&cfg).map_err(|e| e.to_string())?;
    let oracle = PerfectOracle::new(data.split.masked.clone(), data.dataset.num_artists());
    let e = evaluate(&oracle, "oracle", &data, 10).map_err(|e| e.to_string())?;
    let auc = e.groups[0].auc_mean.ok_or("no AUC")?;
    if auc == 1.0 {
        Ok(format!("mean AUC {auc} over {} users", e.groups[0].users - e.groups[0].skipped))
    } else {
        Err(format!("mean AUC {auc}"))
    }
}

/// All five model kinds with settings small enough for many repetitions.
pub fn light_models() -> String {
    [
        model_block("popularity", ""),
        model_block("random", ""),
        model_block("slim", "l1 = 0.5, l2 = 5.0, max_iters = 30"),
        model_block("wrmf", "factors = 8, sweeps = 4"),
        model_block("multivae", "hidden_dim = 16, latent_dim = 4, epochs = 5"),
    ]
    .concat()
}

/// GAP_r of popularity is at least every other model's, in every group.
pub fn dominance_violation(report: &ExperimentReport) -> Option<String> {
    for g in 0..4 {
        let pop = group(report, "popularity", g).gap_r?;
        for m in &report.models {
            if let Some(r) = m.groups[g].gap_r {
                if r > pop + 1e-12 {
                    return Some(format!("{} group {g}: {r} > {pop}", m.name));
                }
            }
        }
    }
    None
}

pub fn dominance_dataset(case: u64) -> ExperimentConfig {
    let users = 60 + (case as usize * 37) % 90;
    let artists = 80 + (case as usize * 53) % 150;
    let extra = "[evaluation]\npopularity_scope = \"train-only\"\n";
    synthetic_config(&light_models(), users, artists, 1000 + case, extra)
}

pub fn check_popularity_dominance(datasets: u64) -> Check {
    for case in 0..datasets {
        let r = run_experiment(&dominance_dataset(case)).map_err(|e| e.to_string())?;
        if let Some(v) = dominance_violation(&r) {
            return Err(format!("dataset {case}: {v}"));
        }
    }
    Ok(format!("{datasets} datasets x 5 models x 4 groups"))
}

pub fn ordering_config() -> ExperimentConfig {
    let models = ["popularity", "random", "slim", "wrmf", "multivae"]
        .map(|k| model_block(k, ""))
        .concat();
    synthetic_config(&models, 500, 2000, 1, "")
}

pub fn check_model_ordering() -> Check {
    let t = Instant::now();
    let r = run_experiment(&ordering_config()).map_err(|e| e.to_string())?;
    let rnd = group(&r, "random", 0);
    let pop_dg = group(&r, "popularity", 0).delta_gap.ok_or("no popularity delta GAP")?;
    let mut notes = Vec::new();
    let mut ok = true;
    for m in ["slim", "wrmf", "multivae"] {
        let g = group(&r, m, 0);
        let (auc, se, dg) = (
            g.auc_mean.ok_or("no AUC")?,
            g.auc_stderr.ok_or("no stderr")?,
            g.delta_gap.ok_or("no delta GAP")?,
        );
        let se_rnd = rnd.auc_stderr.ok_or("no random stderr")?;
        let margin = (auc - rnd.auc_mean.ok_or("no random AUC")?) / (se * se + se_rnd * se_rnd).sqrt();
        ok &= auc >= 0.60 && margin >= 5.0 && dg < pop_dg;
        notes.push(format!("{m} AUC {auc:.3} (+{margin:.0} se) dGAP {dg:.3}"));
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    let detail = format!("{}; popularity dGAP {pop_dg:.3}; {secs:.0}s", notes.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn check_determinism() -> Check {
    let models = [
        model_block("popularity", ""),
        model_block("random", ""),
        model_block("slim", ""),
        model_block("wrmf", "factors = 16"),
        model_block("multivae", "epochs = 10"),
    ]
    .concat();
    let cfg = synthetic_config(&models, 200, 600, 77, "");
    let first = render_kv(&run_experiment(&cfg).map_err(|e| e.to_string())?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let second = pool.install(|| run_experiment(&cfg).map(|r| render_kv(&r)));
    let second = second.map_err(|e| e.to_string())?;
    if first == second && !first.is_empty() {
        Ok(format!("{} identical lines, default pool vs 1 thread", first.lines().count()))
    } else {
        Err("report.kv differs between runs".into())
    }
}

// ---------------------------------------------------------------- WRMF

pub fn random_counts(rng: &mut ChaCha8Rng, users: usize, items: usize, density: f64) -> InteractionDataset {
    loop {
        let mut trip = Vec::new();
        for u in 0..users {
            for i in 0..items {
                if rng.random_bool(density) {
                    trip.push((u, i, rng.random_range(1..=20u32)));
                }
            }
        }
        let users_ok = (0..users).all(|u| trip.iter().any(|t| t.0 == u));
        if users_ok {
            return InteractionDataset::from_triplets(
                (0..users).map(|u| format!("u{u}")).collect(),
                (0..items).map(|i| format!("a{i}")).collect(),
                trip,
                None,
            )
            .expect("valid toy");
        }
    }
}

fn dense_counts(ds: &InteractionDataset) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(ds.num_users(), ds.num_artists());
    for u in 0..ds.num_users() {
        for (&a, &c) in ds.profile(u).iter().zip(ds.profile_counts(u)) {
            m[(u, a as usize)] = c as f64;
        }
    }
    m
}

/// Ridge solve for every row of `counts` given the other side's factors, with dense
/// per-row confidence matrices.
fn dense_side(counts: &DMatrix<f64>, other: &DMatrix<f64>, p: &WrmfParams) -> DMatrix<f64> {
    let d = p.factors;
    let mut out = DMatrix::zeros(counts.nrows(), d);
    for r in 0..counts.nrows() {
        let mut a = DMatrix::<f64>::identity(d, d) * p.lambda;
        let mut b = DVector::<f64>::zeros(d);
        for i in 0..counts.ncols() {
            let c = counts[(r, i)];
            let conf = if c > 0.0 { p.confidence(c as u32) } else { 1.0 };
            let pref = if c > 0.0 { 1.0 } else { 0.0 };
            let y = other.row(i).transpose();
            a += &y * y.transpose() * conf;
            b += &y * (conf * pref);
        }
        let x = a.lu().solve(&b).expect("non-singular");
        out.set_row(r, &x.transpose());
    }
    out
}

pub fn naive_wrmf_objective(ds: &InteractionDataset, m: &WrmfModel) -> f64 {
    let d = m.params.factors;
    let counts = dense_counts(ds);
    let mut loss = 0.0;
    for u in 0..ds.num_users() {
        for i in 0..ds.num_artists() {
            let c = counts[(u, i)];
            let s: f64 = (0..d).map(|k| m.user_vector(u)[k] * m.item_vector(i)[k]).sum();
            let (conf, pref) = if c > 0.0 { (m.params.confidence(c as u32), 1.0) } else { (1.0, 0.0) };
            loss += conf * (pref - s) * (pref - s);
        }
    }
    let reg: f64 = m.user_factors().iter().chain(m.item_factors()).map(|v| v * v).sum();
    loss + m.params.lambda * reg
}

fn max_abs_diff(a: &[f64], b: &DMatrix<f64>) -> f64 {
    // nalgebra is column-major; compare row by row
    let d = b.ncols();
    a.iter()
        .enumerate()
        .map(|(k, v)| (v - b[(k / d, k % d)]).abs())
        .fold(0.0, f64::max)
}

/// One random 5×4 toy: returns the worst user/item deviation and the
/// objective discrepancy against the dense computations.
pub fn wrmf_toy(seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = random_counts(&mut rng, 5, 4, 0.5);
    let params = WrmfParams {
        factors: rng.random_range(1..=3),
        alpha: rng.random_range(0.1..5.0),
        lambda: rng.random_range(0.01..2.0),
        init_seed: seed,
        ..WrmfParams::default()
    };
    // factors of order one rather than the tiny default initialisation
    let d = params.factors;
    let u0: Vec<f64> = (0..5 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let i0: Vec<f64> = (0..4 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut m = WrmfModel::from_factors(params.clone(), u0, i0).unwrap();
    let obj_gap = (wrmf_objective(&ds, &m).unwrap() - naive_wrmf_objective(&ds, &m)).abs()
        / naive_wrmf_objective(&ds, &m).abs().max(1.0);

    let counts = dense_counts(&ds);
    let items = DMatrix::from_row_slice(4, d, m.item_factors());
    let want_users = dense_side(&counts, &items, &params);
    m.update_users(&ds).unwrap();
    let du = max_abs_diff(m.user_factors(), &want_users);

    let users = DMatrix::from_row_slice(5, d, m.user_factors());
    let want_items = dense_side(&counts.transpose(), &users, &params);
    m.update_items(&ds).unwrap();
    let di = max_abs_diff(m.item_factors(), &want_items);
    (du, di, obj_gap)
}

/// Largest relative increase between consecutive half-sweeps.
pub fn wrmf_worst_increase(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = random_counts(&mut rng, 30, 25, 0.2);
    let params = WrmfParams {
        factors: rng.random_range(2..=6),
        alpha: rng.random_range(0.5..10.0),
        lambda: rng.random_range(0.01..1.0),
        sweeps: 8,
        init_seed: seed,
        confidence: if seed % 2 == 0 {
            popbias::wrmf::Confidence::Linear
        } else {
            popbias::wrmf::Confidence::Log
        },
        ..WrmfParams::default()
    };
    let (_, trace) = fit_wrmf_traced(&ds, &params).unwrap();
    trace
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn check_wrmf() -> Check {
    let mut worst_solve: f64 = 0.0;
    let mut worst_obj: f64 = 0.0;
    for s in 0..50 {
        let (du, di, obj) = wrmf_toy(s);
        worst_solve = worst_solve.max(du).max(di);
        worst_obj = worst_obj.max(obj);
    }
    let worst_inc = (0..30).map(wrmf_worst_increase).fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "dense-solve gap {worst_solve:.1e}, objective gap {worst_obj:.1e}, worst half-sweep change {worst_inc:.1e}"
    );
    if worst_solve <= 1e-8 && worst_obj <= 1e-10 && worst_inc <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- SLIM

pub fn dense_matrix(ds: &InteractionDataset) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; ds.num_artists()]; ds.num_users()];
    for (u, row) in m.iter_mut().enumerate() {
        for (&a, &c) in ds.profile(u).iter().zip(ds.profile_counts(u)) {
            row[a as usize] = c as f64;
        }
    }
    m
}

pub fn column_objective(a: &[Vec<f64>], j: usize, w: &[f64], p: &SlimParams) -> f64 {
    let mut rss = 0.0;
    for row in a {
        let pred: f64 = row.iter().zip(w).map(|(x, wk)| x * wk).sum();
        rss += (row[j] - pred).powi(2);
    }
    0.5 * rss + 0.5 * p.l2 * w.iter().map(|v| v * v).sum::<f64>() + p.l1 * w.iter().map(|v| v.abs()).sum::<f64>()
}

fn dense_weights(n: usize, entries: &[(u32, f64)]) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for &(k, v) in entries {
        w[k as usize] = v;
    }
    w
}

/// Largest KKT violation of a column solution, scaled per coordinate by
/// `‖a_k‖² + l2` (the curvature of the coordinate subproblem).
pub fn kkt_residual(a: &[Vec<f64>], j: usize, w: &[f64], p: &SlimParams) -> f64 {
    let n = w.len();
    let resid: Vec<f64> = a
        .iter()
        .map(|row| row[j] - row.iter().zip(w).map(|(x, wk)| x * wk).sum::<f64>())
        .collect();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        if k == j {
            continue;
        }
        let col_sq: f64 = a.iter().map(|r| r[k] * r[k]).sum();
        let curv = col_sq + p.l2;
        if curv == 0.0 {
            continue;
        }
        // gradient of the smooth part
        let g = -a.iter().zip(&resid).map(|(r, e)| r[k] * e).sum::<f64>() + p.l2 * w[k];
        let v = if w[k] > 0.0 {
            (g + p.l1).abs()
        } else if w[k] < 0.0 {
            (g - p.l1).abs()
        } else if p.non_negative {
            (-(g + p.l1)).max(0.0)
        } else {
            (g.abs() - p.l1).max(0.0)
        };
        worst = worst.max(v / curv);
    }
    worst
}

pub fn slim_instance(seed: u64) -> (InteractionDataset, SlimParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = random_counts(&mut rng, 25, 10, 0.35);
    let p = SlimParams {
        l1: rng.random_range(0.0..3.0),
        l2: rng.random_range(0.1..5.0),
        non_negative: seed % 3 != 0,
        max_iters: 10_000,
        tolerance: 1e-10,
        binarize: false,
    };
    (ds, p)
}

/// Worst monotonicity breach (relative) and worst scaled KKT residual over all columns.
pub fn slim_instance_checks(seed: u64) -> (f64, f64) {
    let (ds, p) = slim_instance(seed);
    let a = dense_matrix(&ds);
    let mut worst_inc: f64 = f64::NEG_INFINITY;
    let mut worst_kkt: f64 = 0.0;
    for j in 0..ds.num_artists() {
        let (entries, trace) = fit_column_traced(&ds, j, &p).unwrap();
        for w in trace.windows(2) {
            worst_inc = worst_inc.max((w[1] - w[0]) / w[0].abs().max(1.0));
        }
        let w = dense_weights(ds.num_artists(), &entries);
        worst_kkt = worst_kkt.max(kkt_residual(&a, j, &w, &p));
    }
    (worst_inc, worst_kkt)
}

/// Solver vs exhaustive 0.01-lattice search on a 3-artist toy, column 0.
pub fn slim_lattice(non_negative: bool) -> f64 {
    let rows: [[u32; 3]; 6] = [[3, 1, 0], [2, 2, 1], [0, 1, 4], [1, 0, 2], [4, 3, 0], [0, 2, 2]];
    let trip = rows.iter().enumerate().flat_map(|(u, r)| {
        r.iter().enumerate().filter(|(_, &c)| c > 0).map(move |(i, &c)| (u, i, c))
    });
    let ds = InteractionDataset::from_triplets(
        (0..6).map(|u| format!("u{u}")).collect(),
        (0..3).map(|i| format!("a{i}")).collect(),
        trip,
        None,
    )
    .unwrap();
    let p = SlimParams {
        l1: 0.5,
        l2: 1.0,
        non_negative,
        max_iters: 10_000,
        tolerance: 1e-10,
        binarize: false,
    };
    let a = dense_matrix(&ds);
    let lo = if non_negative { 0 } else { -150 };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for x in lo..=150 {
        for y in lo..=150 {
            let w = [0.0, x as f64 * 0.01, y as f64 * 0.01];
            let f = column_objective(&a, 0, &w, &p);
            if f < best.0 {
                best = (f, w[1], w[2]);
            }
        }
    }
    let (entries, _) = fit_column_traced(&ds, 0, &p).unwrap();
    let w = dense_weights(3, &entries);
    (w[1] - best.1).abs().max((w[2] - best.2).abs())
}

pub fn check_slim() -> Check {
    let mut worst_inc: f64 = f64::NEG_INFINITY;
    let mut worst_kkt: f64 = 0.0;
    for s in 0..30 {
        let (i, k) = slim_instance_checks(s);
        worst_inc = worst_inc.max(i);
        worst_kkt = worst_kkt.max(k);
    }
    let lattice = slim_lattice(true).max(slim_lattice(false));
    let detail = format!(
        "worst per-update change {worst_inc:.1e}, worst scaled KKT residual {worst_kkt:.1e}, lattice gap {lattice:.4}"
    );
    if worst_inc <= 1e-12 && worst_kkt <= 1e-6 && lattice <= 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- Multi-VAE

pub struct GradCase {
    pub model: MultiVaeModel,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub beta: f64,
}

pub fn grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = MultiVaeParams {
        hidden_dim: 8,
        latent_dim: 4,
        init_seed: seed,
        ..MultiVaeParams::default()
    };
    let mut model = MultiVaeModel::init(12, &params).unwrap();
    for t in model.parameters_mut() {
        *t += rng.random_range(-0.3..0.3);
    }
    let mut x: Vec<f64> = (0..12)
        .map(|_| if rng.random_bool(0.4) { rng.random_range(1..4) as f64 } else { 0.0 })
        .collect();
    x[rng.random_range(0..12)] = 1.0;
    let eps = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
    GradCase {
        model,
        x,
        eps,
        beta: rng.random_range(0.0..1.0),
    }
}

/// Worst violation ratio `|analytic − numeric| / max(1e-4·scale, 1e-7)`; ≤ 1 passes.
pub fn gradient_violation(case: &GradCase) -> f64 {
    let (_, g) = case.model.gradient(&case.x, &case.eps, case.beta).unwrap();
    let h = 1e-5;
    let mut m = case.model.clone();
    let mut worst: f64 = 0.0;
    for k in 0..g.len() {
        let orig = m.parameters()[k];
        m.parameters_mut()[k] = orig + h;
        let up = m.elbo_loss(&case.x, &case.eps, case.beta).unwrap().total;
        m.parameters_mut()[k] = orig - h;
        let down = m.elbo_loss(&case.x, &case.eps, case.beta).unwrap().total;
        m.parameters_mut()[k] = orig;
        let fd = (up - down) / (2.0 * h);
        let allowed = (1e-4 * g[k].abs().max(fd.abs())).max(1e-7);
        worst = worst.max((g[k] - fd).abs() / allowed);
    }
    worst
}

pub fn kl_min(draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut min = f64::INFINITY;
    for _ in 0..draws {
        let dim = rng.random_range(1..=8);
        let mu: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lv: Vec<f64> = (0..dim)
            .map(|_| {
                if rng.random_bool(0.2) {
                    rng.random_range(-1e-6..1e-6)
                } else {
                    rng.random_range(-10.0..10.0)
                }
            })
            .collect();
        min = min.min(gaussian_kl(&mu, &lv));
    }
    min
}

pub fn check_multivae() -> Check {
    let worst = (0..12).map(|s| gradient_violation(&grad_case(s))).fold(0.0, f64::max);
    let kl = kl_min(100_000);
    let detail = format!("12 gradient cases, worst tolerance ratio {worst:.3}; min KL over 1e5 draws {kl:.2e}");
    if worst <= 1.0 && kl >= 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- gapcalc

pub const RECORD_HEADER: &str = "service,user,group,role,artist,spotify_popularity,lfm_phi\n";

pub fn one_user_fixture() -> String {
    format!(
        "{RECORD_HEADER}svc,u1,low,profile-seed,a,,0.2\nsvc,u1,low,profile-seed,b,,0.4\n\
         svc,u1,low,recommended,c,,0.1\nsvc,u1,low,recommended,d,,0.2\n"
    )
}

/// Two users with different list lengths: GAP is the mean of per-user means.
pub fn two_user_fixture() -> String {
    format!(
        "{RECORD_HEADER}svc,u1,high,profile-seed,a,,0.2\nsvc,u1,high,profile-seed,b,,0.4\n\
         svc,u1,high,recommended,c,,0.1\nsvc,u2,high,profile-seed,d,,0.6\n\
         svc,u2,high,recommended,e,,0.3\nsvc,u2,high,recommended,f,,0.5\n"
    )
}

/// Recommended artists carry exactly the profile popularity for every user.
pub fn all_equal_fixture() -> String {
    let mut s = RECORD_HEADER.to_string();
    for (u, g) in ["low", "medium", "high"].iter().enumerate() {
        for (k, pop) in [(0, 71.0), (1, 64.0)] {
            s.push_str(&format!("Spotify,u{u},{g},profile-seed,p{u}{k},{pop},\n"));
            s.push_str(&format!("Spotify,u{u},{g},recommended,r{u}{k},{pop},\n"));
        }
    }
    s
}

pub const NEAR_PROFILE: [f64; 12] = [45.6, 60.0, 38.0, 55.0, 62.0, 50.0, 47.0, 58.0, 52.0, 66.0, 40.0, 60.0];
pub const NEAR_RECS: [f64; 12] = [50.0, 66.0, 45.0, 62.0, 70.0, 55.0, 48.0, 64.0, 57.0, 75.0, 44.0, 60.0];
/// scipy.stats.ttest_ind(recs, profile, equal_var=False, alternative="greater")
pub const NEAR_T: f64 = 1.3483392843193156;
pub const NEAR_DF: f64 = 21.72540865499417;
pub const NEAR_P: f64 = 0.09571974797158059;

/// Twelve users (four per group), one seed and one recommendation each:
/// profile mean 52.8, recommendation mean 58.0.
pub fn near_significance_fixture() -> String {
    let mut s = RECORD_HEADER.to_string();
    for u in 0..12 {
        let g = ["low", "medium", "high"][u / 4];
        s.push_str(&format!("YouTube,u{u},{g},profile-seed,p{u},{},\n", NEAR_PROFILE[u]));
        s.push_str(&format!("YouTube,u{u},{g},recommended,r{u},{},\n", NEAR_RECS[u]));
    }
    s
}

pub fn check_gapcalc() -> Check {
    let run = |text: String| gapcalc(&parse_records(text.as_bytes(), "fixture").unwrap());
    let mut notes = Vec::new();

    let r = run(one_user_fixture());
    let dg = format!("{:.6}", r[0].delta_gap.unwrap());
    if (format!("{:.6}", r[0].gap_p), format!("{:.6}", r[0].gap_r), dg.as_str())
        != ("0.300000".into(), "0.150000".into(), "-0.500000")
    {
        return Err(format!("one-user fixture gave dGAP {dg}"));
    }
    notes.push(format!("one-user dGAP {dg}"));

    let r = run(two_user_fixture());
    let dg = format!("{:.6}", r[0].delta_gap.unwrap());
    if dg != "-0.444444" {
        return Err(format!("two-user fixture gave dGAP {dg}"));
    }
    notes.push(format!("two-user dGAP {dg}"));

    let r = run(all_equal_fixture());
    if r.iter().any(|row| format!("{:.6}", row.delta_gap.unwrap()) != "0.000000") {
        return Err("all-equal fixture has non-zero dGAP".into());
    }
    notes.push("all-equal dGAP 0.000000".into());

    let r = run(near_significance_fixture());
    let overall = r
        .iter()
        .find(|row| row.group.is_none() && row.measure == Measure::Spotify)
        .ok_or("no overall row")?;
    let test = overall.test.ok_or("no t-test")?;
    if !((test.p_one_tailed - NEAR_P).abs() <= 1e-6 && (test.t - NEAR_T).abs() <= 1e-9 && test.p_one_tailed > 0.05) {
        return Err(format!("near-significance p {} t {}", test.p_one_tailed, test.t));
    }
    notes.push(format!("crafted one-tailed p {:.4} > 0.05", test.p_one_tailed));
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- real data

pub const REAL_DATA_ENV: &str = "POPBIAS_LFM_SUBSET";

/// `None` when the real interaction file is not configured.
pub fn check_real_data() -> Option<Check> {
    let path = std::env::var_os(REAL_DATA_ENV)?;
    let groups = std::env::var_os("POPBIAS_LFM_GROUPS");
    Some((|| {
        let ds = read_interactions(Path::new(&path), groups.as_deref().map(Path::new))
            .map_err(|e| e.to_string())?;
        let counts = (ds.num_users(), ds.num_artists(), ds.num_pairs());
        let stats = long_tail_stats(&ds, None);
        let split = split_mask(&ds, 0.2, 0).map_err(|e| e.to_string())?;
        let trainable = long_tail_stats(&ds, Some(&split)).trainable_artists.unwrap_or(0);
        let cov = stats.coverage_at(0.05);
        let detail = format!(
            "users/artists/pairs {counts:?}, coverage(0.05) {cov:.3}, trainable artists {trainable}"
        );
        let _ = compute_popularity(&ds).map_err(|e| e.to_string())?;
        if counts == (3000, 352_805, 1_755_361)
            && cov >= 0.62
            && (trainable as f64 - 305_000.0).abs() <= 0.05 * 305_000.0
        {
            Ok(detail)
        } else {
            Err(detail)
        }
    })())
}

pub fn default_synthetic() -> InteractionDataset {
    generate_synthetic(&SyntheticConfig::default(), 0).unwrap()
}
