//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails or overruns its time budget.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use pvsentry::attack::{apply_attacks, four_attack_day, AttackKind, AttackSpec};
use pvsentry::detect::hull::{hull_fit, MEMBERSHIP_TOL};
use pvsentry::detect::iforest::{iforest_fit, IforestParams};
use pvsentry::detect::nn::{Activation, Network};
use pvsentry::detect::ocsvm::{default_gamma, ocsvm_fit, KKT_TOL};
use pvsentry::detect::residual::GaussianResidualModel;
use pvsentry::detect::seq::{dae_layer_sizes, DaeConfig};
use pvsentry::detect::{DetectorKind, Orientation};
use pvsentry::eval::{evaluate_detections, precision_recall_f1, roc_auc, ConfusionCounts, MetricsRow, ReportRow};
use pvsentry::feeder::{simulate, Scenario, SimOutput};
use pvsentry::fusion::{fuse_linear, fuse_most_anomalous};
use pvsentry::rng::{stream, Purpose};
use pvsentry::suite::{train_suite, SuiteConfig};
use pvsentry::timeseries::{PHASE_ANGLE, VOLTAGE_MAGNITUDE};
use pvsentry::workflow;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// 1

fn metric_identity() -> Check {
    // Counts with precision 95.90 % and recall 57.12 %.
    let c = ConfusionCounts { tp: 5712, fp: 244, tn: 90_000, fn_: 4288 };
    let m = precision_recall_f1(&c).map_err(err)?;
    let f1_oracle = 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64;
    ensure((m.precision * 100.0 - 95.90).abs() < 0.005, || format!("precision {}", m.precision))?;
    ensure((m.recall * 100.0 - 57.12).abs() < 0.005, || format!("recall {}", m.recall))?;
    ensure((m.f1 - f1_oracle).abs() < 1e-12, || format!("f1 {} vs oracle {f1_oracle}", m.f1))?;
    ensure((m.f1 * 100.0 - 71.60).abs() <= 0.05, || format!("f1 {:.4} %", m.f1 * 100.0))?;
    Ok(format!("F1 {:.3} %", m.f1 * 100.0))
}

// 2

fn det3(m: &[f64], k: usize) -> f64 {
    match k {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => unreachable!(),
    }
}

/// Inverse through the adjugate: cofactor of (j, i) over the determinant.
fn inverse(m: &[f64], k: usize) -> Vec<f64> {
    let d = det3(m, k);
    if k == 1 {
        return vec![1.0 / d];
    }
    let mut inv = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let minor: Vec<f64> = (0..k)
                .filter(|&r| r != j)
                .flat_map(|r| (0..k).filter(move |&c| c != i).map(move |c| (r, c)))
                .map(|(r, c)| m[r * k + c])
                .collect();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[i * k + j] = sign * det3(&minor, k - 1) / d;
        }
    }
    inv
}

fn gaussian_oracle(mean: &[f64], cov: &[f64], x: &[f64]) -> f64 {
    let k = mean.len();
    let inv = inverse(cov, k);
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for i in 0..k {
        for j in 0..k {
            q += d[i] * inv[i * k + j] * d[j];
        }
    }
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(k as i32) * det3(cov, k)).sqrt()
}

fn gaussian_pdf() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let k = 1 + trial % 3;
        let a: Vec<f64> = (0..k * k).map(|_| gaussian(&mut rng)).collect();
        let mut cov = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                cov[i * k + j] = (0..k).map(|l| a[i * k + l] * a[j * k + l]).sum::<f64>() + if i == j { 0.2 } else { 0.0 };
            }
        }
        let mean: Vec<f64> = (0..k).map(|_| 3.0 * gaussian(&mut rng)).collect();
        let x: Vec<f64> = mean.iter().map(|m| m + gaussian(&mut rng)).collect();
        let model = GaussianResidualModel::new(mean.clone(), cov.clone()).map_err(err)?;
        let got = model.pdf(&x).map_err(err)?;
        let want = gaussian_oracle(&mean, &cov, &x);
        let rel = (got - want).abs() / want.abs();
        worst = worst.max(rel);
        ensure(rel <= 1e-10, || format!("trial {trial} (k = {k}): {got} vs {want}, relative {rel:e}"))?;
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

// 3

fn ocsvm_nu_property() -> Check {
    let nu = 0.1;
    let n = 50;
    let mut summary = Vec::new();
    for trial in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let x = Array2::from_shape_fn((n, 2), |_| gaussian(&mut rng));
        let model = ocsvm_fit(x.view(), nu, default_gamma(2)).map_err(err)?;
        let outliers = model.score_matrix(x.view()).map_err(err)?.iter().filter(|&&d| d < -KKT_TOL).count();
        let svs = model.dual_coeffs.iter().filter(|&&a| a > 0.0).count();
        let out_frac = outliers as f64 / n as f64;
        let sv_frac = svs as f64 / n as f64;
        ensure(out_frac <= nu + 1.0 / n as f64, || format!("trial {trial}: outlier fraction {out_frac}"))?;
        ensure(sv_frac >= nu - 1.0 / n as f64, || format!("trial {trial}: support-vector fraction {sv_frac}"))?;
        summary.push(format!("{outliers}/{svs}"));
    }
    Ok(format!("outliers/SVs per trial {}", summary.join(" ")))
}

// 4

/// Lawson–Hanson non-negative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    for _ in 0..3 * n {
        let w = a.transpose() * (b - a * &x);
        let Some(j) = (0..n).filter(|&j| !passive[j] && w[j] > 1e-10).max_by(|&i, &j| w[i].total_cmp(&w[j])) else {
            break;
        };
        passive[j] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let ap = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
            let zp = ap.svd(true, true).solve(b, 1e-14).expect("svd solve");
            let mut z = DVector::zeros(n);
            for (c, &i) in cols.iter().enumerate() {
                z[i] = zp[c];
            }
            if cols.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            let alpha = cols
                .iter()
                .filter(|&&i| z[i] <= 0.0)
                .map(|&i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for &i in &cols {
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

/// Distance from `p` to the hull of `points` by a penalized simplex QP.
fn hull_distance_oracle(points: ArrayView2<'_, f64>, p: &[f64]) -> f64 {
    const WEIGHT: f64 = 1e4;
    let (n, k) = points.dim();
    let a = DMatrix::from_fn(k + 1, n, |r, c| if r < k { points[[c, r]] } else { WEIGHT });
    let b = DVector::from_fn(k + 1, |r, _| if r < k { p[r] } else { WEIGHT });
    let lambda = nnls(&a, &b);
    let total = lambda.sum();
    (0..k)
        .map(|r| {
            let q: f64 = (0..n).map(|c| lambda[c] * points[[c, r]]).sum::<f64>() / total;
            (q - p[r]).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn hull_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points = Array2::from_shape_fn((200, 5), |_| gaussian(&mut rng));
    let hull = hull_fit(points.view()).map_err(err)?;
    let (mut inside, mut worst) = (0, 0.0f64);
    for i in 0..100 {
        let scale = if i % 2 == 0 { 0.4 } else { 2.0 };
        let p: Vec<f64> = (0..5).map(|_| scale * gaussian(&mut rng)).collect();
        let (is_in, margin) = hull.contains(&p).map_err(err)?;
        let d = hull_distance_oracle(points.view(), &p);
        let oracle_in = d <= 1e-7;
        ensure(is_in == oracle_in, || format!("probe {i}: verdict {is_in}, oracle distance {d:e}"))?;
        ensure((margin - d).abs() <= 1e-6, || format!("probe {i}: margin {margin} vs oracle {d}"))?;
        ensure(!is_in || margin == 0.0, || format!("probe {i}: inside with margin {margin}"))?;
        inside += is_in as usize;
        worst = worst.max((margin - d).abs());
    }
    Ok(format!("{inside} inside, {} outside, {} vertices, max margin gap {worst:.1e}, tol {MEMBERSHIP_TOL:e}", 100 - inside, hull.n_vertices()))
}

// 5

fn check_gradients(net: &Network, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64, String> {
    const H: f64 = 1e-5;
    let (_, g) = net.gradients(x, y);
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, numeric: f64, what: String| -> Result<(), String> {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        ensure(rel <= 1e-5, || format!("{what}: backprop {analytic:e}, finite difference {numeric:e}"))
    };
    for l in 0..net.layers.len() {
        for ((r, c), &analytic) in g.weights[l].indexed_iter() {
            let mut plus = net.clone();
            plus.layers[l].weights[[r, c]] += H;
            let mut minus = net.clone();
            minus.layers[l].weights[[r, c]] -= H;
            compare(analytic, (plus.loss(x, y) - minus.loss(x, y)) / (2.0 * H), format!("layer {l} w[{r},{c}]"))?;
        }
        for (r, &analytic) in g.bias[l].indexed_iter() {
            let mut plus = net.clone();
            plus.layers[l].bias[r] += H;
            let mut minus = net.clone();
            minus.layers[l].bias[r] -= H;
            compare(analytic, (plus.loss(x, y) - minus.loss(x, y)) / (2.0 * H), format!("layer {l} b[{r}]"))?;
        }
    }
    Ok(worst)
}

/// Fresh networks start with zero biases, which can leave a pre-activation
/// exactly on the ReLU kink; random biases keep the check off it.
fn jitter_biases(net: &mut Network, rng: &mut ChaCha8Rng) {
    for layer in &mut net.layers {
        layer.bias.mapv_inplace(|_| 0.1 * gaussian(rng));
    }
}

fn gradient_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_fn((8, 4), |_| gaussian(&mut rng));
    let y = Array2::from_shape_fn((8, 3), |_| gaussian(&mut rng));
    let mut mlp = Network::new(&[4, 6, 5, 3], Activation::Relu, 1).map_err(err)?;
    jitter_biases(&mut mlp, &mut rng);
    let mlp_worst = check_gradients(&mlp, x.view(), y.view()).map_err(|e| format!("MLP {e}"))?;

    let cfg = DaeConfig { hidden: vec![5], code: 2, ..DaeConfig::default() };
    let sizes = dae_layer_sizes(6, &cfg).map_err(err)?;
    let mut dae = Network::new(&sizes, Activation::Relu, 2).map_err(err)?;
    jitter_biases(&mut dae, &mut rng);
    let xd = Array2::from_shape_fn((8, 6), |_| gaussian(&mut rng));
    let dae_worst = check_gradients(&dae, xd.view(), xd.view()).map_err(|e| format!("DAE {e}"))?;
    Ok(format!("worst relative error MLP {mlp_worst:.1e}, DAE {dae_worst:.1e}"))
}

// 6

fn c_oracle(m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    let h: f64 = (1..m).map(|k| 1.0 / k as f64).sum();
    2.0 * h - 2.0 * (m - 1) as f64 / m as f64
}

/// Grows one isolation tree over `rows` and records each row's path length.
fn oracle_tree(x: &Array2<f64>, rows: &[usize], depth: usize, cap: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let splittable: Vec<(usize, f64, f64)> = if rows.len() <= 1 || depth >= cap {
        Vec::new()
    } else {
        (0..x.ncols())
            .filter_map(|f| {
                let vals: Vec<f64> = rows.iter().map(|&r| x[[r, f]]).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo < hi).then_some((f, lo, hi))
            })
            .collect()
    };
    if splittable.is_empty() {
        for &r in rows {
            out[r] = depth as f64 + c_oracle(rows.len());
        }
        return;
    }
    let (f, lo, hi) = splittable[rng.random_range(0..splittable.len())];
    let cut = rng.random_range(lo..hi);
    let left: Vec<usize> = rows.iter().copied().filter(|&r| x[[r, f]] <= cut).collect();
    let right: Vec<usize> = rows.iter().copied().filter(|&r| x[[r, f]] > cut).collect();
    oracle_tree(x, &left, depth + 1, cap, rng, out);
    oracle_tree(x, &right, depth + 1, cap, rng, out);
}

fn iforest_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut x = Array2::from_shape_fn((10, 2), |_| gaussian(&mut rng));
    x[[7, 0]] = 25.0;
    x[[7, 1]] = -30.0;
    let seed = 61;
    let params = IforestParams { n_trees: 100, ..IforestParams::default() };
    let model = iforest_fit(x.view(), &params, seed).map_err(err)?;

    let n = x.nrows();
    let psi = params.subsample_size.min(n);
    let cap = (psi as f64).log2().ceil() as usize;
    let mut totals = vec![0.0; n];
    for t in 0..params.n_trees {
        let mut trng = stream(seed, Purpose::IsolationTree, t as u64);
        let rows = index::sample(&mut trng, n, psi).into_vec();
        let mut lengths = vec![f64::NAN; n];
        oracle_tree(&x, &rows, 0, cap, &mut trng, &mut lengths);
        for (tot, l) in totals.iter_mut().zip(&lengths) {
            *tot += l;
        }
    }
    let oracle: Vec<f64> = totals.iter().map(|t| t / params.n_trees as f64).collect();
    let got = model.score_matrix(x.view()).map_err(err)?;
    ensure(got == oracle, || format!("path lengths {got:?} vs oracle {oracle:?}"))?;
    let strictly_min = (0..n).filter(|&i| i != 7).all(|i| got[7] < got[i]);
    ensure(strictly_min, || format!("outlier path length {} is not strictly minimal in {got:?}", got[7]))?;
    Ok(format!("outlier {:.3} vs next {:.3}", got[7], got.iter().enumerate().filter(|(i, _)| *i != 7).map(|(_, v)| *v).fold(f64::INFINITY, f64::min)))
}

// 7 and 8

const SIM_SEED: u64 = 7;

fn noon(sc: &Scenario, day: usize, minutes: usize) -> (usize, usize) {
    let spd = sc.steps_per_day();
    let per_min = 60 / sc.step as usize;
    let start = day * spd + 12 * 60 * per_min;
    (start, start + minutes * per_min)
}

fn attacked(base: &SimOutput, sc: &Scenario, kind: AttackKind, interval: (usize, usize), penetration: f64) -> Result<SimOutput, String> {
    let mut sim = base.clone();
    apply_attacks(&mut sim, &[AttackSpec::new(kind, vec![interval], penetration)], &sc.feeder, 3).map_err(err)?;
    Ok(sim)
}

fn simulator_directionality() -> Check {
    let sc = Scenario::with_seed(SIM_SEED);
    let base = simulate(&sc).map_err(err)?;
    let (a, b) = noon(&sc, 2, 30);
    let v0 = base.node.channel(VOLTAGE_MAGNITUDE).map_err(err)?;
    let ang0 = base.node.channel(PHASE_ANGLE).map_err(err)?;
    let mut notes = Vec::new();
    for kind in [AttackKind::Disconnect, AttackKind::Curtailment] {
        let sim = attacked(&base, &sc, kind, (a, b), 1.0)?;
        let v = sim.node.channel(VOLTAGE_MAGNITUDE).map_err(err)?;
        for t in a..b {
            ensure(v[t] < v0[t], || format!("{kind:?} at step {t}: magnitude {} not below {}", v[t], v0[t]))?;
        }
        notes.push(format!("{kind:?} Δ|V| {:.2e}", (a..b).map(|t| v[t] - v0[t]).sum::<f64>() / (b - a) as f64));
    }
    let sim = attacked(&base, &sc, AttackKind::ReversePowerFlow, (a, b), 1.0)?;
    let v = sim.node.channel(VOLTAGE_MAGNITUDE).map_err(err)?;
    let ang = sim.node.channel(PHASE_ANGLE).map_err(err)?;
    for t in a..b {
        ensure(v[t] > v0[t], || format!("reverse power flow at step {t}: magnitude {} not above {}", v[t], v0[t]))?;
        ensure(ang[t] > ang0[t], || format!("reverse power flow at step {t}: angle {} not above {}", ang[t], ang0[t]))?;
    }
    notes.push(format!("ReversePowerFlow Δ|V| {:.2e}", (a..b).map(|t| v[t] - v0[t]).sum::<f64>() / (b - a) as f64));
    Ok(notes.join(", "))
}

fn penetration_trend() -> Check {
    let sc = Scenario::with_seed(SIM_SEED);
    let base = simulate(&sc).map_err(err)?;
    let (a, b) = noon(&sc, 3, 60);
    let v0 = base.node.channel(VOLTAGE_MAGNITUDE).map_err(err)?;
    let mut means = Vec::new();
    for p in [0.25, 0.5, 0.75, 1.0] {
        let sim = attacked(&base, &sc, AttackKind::Disconnect, (a, b), p)?;
        let v = sim.node.channel(VOLTAGE_MAGNITUDE).map_err(err)?;
        means.push((a..b).map(|t| (v[t] - v0[t]).abs()).sum::<f64>() / (b - a) as f64);
    }
    ensure(means.windows(2).all(|w| w[1] >= w[0]), || format!("mean |Δ| by penetration {means:?}"))?;
    Ok(format!("mean |Δ|V|| {}", means.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>().join(" → ")))
}

// 9

fn row(rows: &[MetricsRow], r: ReportRow) -> &MetricsRow {
    rows.iter().find(|m| m.row == r).expect("every report row is present")
}

fn desk_detection() -> Check {
    let sc = Scenario::with_seed(SIM_SEED);
    let spd = sc.steps_per_day();
    let normal = simulate(&sc).map_err(err)?;
    let mut run = normal.clone();
    let labels = apply_attacks(&mut run, &four_attack_day(7, spd, 1.0), &sc.feeder, SIM_SEED).map_err(err)?;
    let mut rows = Vec::new();
    for kind in [DetectorKind::PcaCh, DetectorKind::CorruptRf, DetectorKind::Ocsvm, DetectorKind::Iforest] {
        let cfg = SuiteConfig { detector: kind, seed: SIM_SEED, ..SuiteConfig::default() };
        let suite = train_suite(&normal, 7 * spd, &cfg).map_err(err)?;
        let det = suite.detect(&run).map_err(err)?;
        rows.push((kind, evaluate_detections(&det, &labels, kind.has_roc()).map_err(err)?));
    }
    let get = |k: DetectorKind| &rows.iter().find(|(d, _)| *d == k).expect("evaluated").1;
    let f1 = |k, r| row(get(k), r).metrics.f1;
    let pca_disc = f1(DetectorKind::PcaCh, ReportRow::Disconnect);
    let rf_disc = f1(DetectorKind::CorruptRf, ReportRow::Disconnect);
    let var_recall = row(get(DetectorKind::Ocsvm), ReportRow::Var).metrics.recall;
    let pca_all = f1(DetectorKind::PcaCh, ReportRow::Overall);
    let if_all = f1(DetectorKind::Iforest, ReportRow::Overall);
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    let (a_pca, a_rf) = (pca_disc >= 0.70, rf_disc >= 0.70);
    let b = (var_recall - 1.0).abs() <= 0.05;
    let c = pca_all > if_all;
    let detail = format!(
        "(a) Disconnect F1 PCA-CH {pca_disc:.3} {}, CorruptRF {rf_disc:.3} {}; (b) OCSVM VAR recall {var_recall:.3} {}; (c) Overall F1 PCA-CH {pca_all:.3} vs IsoForest {if_all:.3} {}",
        mark(a_pca),
        mark(a_rf),
        mark(b),
        mark(c)
    );
    let ok = a_pca && a_rf && b && c;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 10

fn fusion_contracts() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 1000;
    let series: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| gaussian(&mut rng)).collect()).collect();
    let s = [series[0].as_slice(), series[1].as_slice(), series[2].as_slice()];
    let lo = fuse_most_anomalous(s, Orientation::LowIsAnomalous).map_err(err)?;
    let hi = fuse_most_anomalous(s, Orientation::HighIsAnomalous).map_err(err)?;
    for t in 0..n {
        let (a, b, c) = (s[0][t], s[1][t], s[2][t]);
        let min = if a <= b && a <= c { a } else if b <= c { b } else { c };
        let max = if a >= b && a >= c { a } else if b >= c { b } else { c };
        ensure(lo[t] == min && hi[t] == max, || format!("triple {t}: ({a}, {b}, {c}) fused to {} / {}", lo[t], hi[t]))?;
    }
    let lin = fuse_linear(s, [1.0, 0.0, 0.0]).map_err(err)?;
    ensure(lin == series[0], || "linear (1, 0, 0) differs from m1".into())?;
    Ok(format!("{n} triples"))
}

// 11

fn pipeline(root: &Path) -> Result<Vec<u8>, String> {
    let scenario = root.join("scenario.json");
    let attack = root.join("attack.json");
    fs::write(&scenario, format!(r#"{{"seed": {SIM_SEED}}}"#)).map_err(err)?;
    fs::write(&attack, r#"{"seed": 7, "four_attack_day": {"day": 7, "penetration": 1.0}}"#).map_err(err)?;
    workflow::run_simulate(&scenario, &root.join("normal")).map_err(err)?;
    workflow::run_attack(&root.join("normal"), &attack, &root.join("attacked"), None).map_err(err)?;
    let cfg = SuiteConfig { detector: DetectorKind::PcaCh, seed: 3, ..SuiteConfig::default() };
    workflow::run_train(&root.join("normal"), &cfg, None, &root.join("model")).map_err(err)?;
    workflow::run_detect(&root.join("model"), &root.join("attacked"), &root.join("detect")).map_err(err)?;
    workflow::run_evaluate(&root.join("detect"), &root.join("eval")).map_err(err)?;
    fs::read(root.join("eval/report.csv")).map_err(err)
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    ensure(first == second, || "report.csv differs between runs".into())?;
    Ok(format!("report.csv {} bytes, sha256 {}", first.len(), &workflow::sha256_hex(&first)[..16]))
}

// 12

fn trapezoid_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let (mut tp, mut fp, mut area, mut prev) = (0.0, 0.0, 0.0, (0.0, 0.0));
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let point = (fp / neg, tp / pos);
        area += (point.0 - prev.0) * (point.1 + prev.1) / 2.0;
        prev = point;
        i = j;
    }
    area
}

fn auc_sanity() -> Check {
    let labels: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
    let separated: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| if l { 10.0 + i as f64 } else { i as f64 * 0.01 }).collect();
    let perfect = roc_auc(&separated, &labels).map_err(err)?;
    ensure(perfect == 1.0, || format!("separated AUC {perfect}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let random = roc_auc(&scores, &labels).map_err(err)?;
    ensure((random - 0.5).abs() <= 0.02, || format!("label-independent AUC {random}"))?;
    let trap = trapezoid_auc(&scores, &labels);
    ensure((random - trap).abs() < 1e-9, || format!("rank AUC {random} vs trapezoid {trap}"))?;
    Ok(format!("separated 1.0, random {random:.4}"))
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: "1", name: "metric identity", budget: secs(1), run: metric_identity },
        Criterion { id: "2", name: "Gaussian pdf oracle", budget: secs(5), run: gaussian_pdf },
        Criterion { id: "3", name: "OCSVM nu-property", budget: secs(30), run: ocsvm_nu_property },
        Criterion { id: "4", name: "hull oracle equivalence", budget: secs(60), run: hull_oracle },
        Criterion { id: "5", name: "gradient checks", budget: secs(30), run: gradient_checks },
        Criterion { id: "6", name: "isolation forest oracle", budget: secs(10), run: iforest_oracle },
        Criterion { id: "7", name: "simulator directionality", budget: secs(120), run: simulator_directionality },
        Criterion { id: "8", name: "penetration trend", budget: secs(180), run: penetration_trend },
        Criterion { id: "9", name: "desk-scale detection", budget: secs(600), run: desk_detection },
        Criterion { id: "10", name: "fusion contracts", budget: secs(1), run: fusion_contracts },
        Criterion { id: "11", name: "end-to-end determinism", budget: secs(600), run: determinism },
        Criterion { id: "12", name: "AUC sanity", budget: secs(1), run: auc_sanity },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == c.id) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; took {elapsed:.1?}, budget {:?}", c.budget)),
            Err(d) => (false, d),
        };
        failed += !pass as usize;
        println!(
            "{} {:>2} {:<26} {:>8.2?}  {detail}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
