//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use locreg::bandwidth::{candidate_bandwidths, default_lambdas, mcv, mcv_direct, select_bandwidth};
use locreg::dimest::estimate_dimension;
use locreg::neighbors::{brute_force_knn, euclidean};
use locreg::synth::{
    bias_variance_probe, generate, middle_block, noise_sweep, rate_study, run_experiment,
    ExperimentOptions, GenConfig, PointStudy,
};
use locreg::{
    local_fit, standardize, Dataset, KernelFamily, KernelSpec, LocalSmoother, NeighborIndex,
    PointSet, PolyBasis,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const FAMILIES: [KernelFamily; 2] = [KernelFamily::Epanechnikov, KernelFamily::Gaussian];

fn within_time(detail: String, elapsed: Duration, limit_s: f64) -> Check {
    if elapsed.as_secs_f64() < limit_s {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; took {:.1}s, limit {limit_s}s",
            elapsed.as_secs_f64()
        ))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn uniform_points(rng: &mut ChaCha20Rng, n: usize, dim: usize, lo: f64, hi: f64) -> PointSet {
    let flat = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
    PointSet::from_flat(flat, dim).unwrap()
}

fn dimension_of(points: &PointSet, block: &[usize]) -> f64 {
    let index = NeighborIndex::build(points.clone()).unwrap();
    estimate_dimension(points, block, 15, &index).unwrap().d_hat
}

fn c1_dimension() -> Check {
    let start = Instant::now();
    let mut est = Vec::new();
    for seed in 0..20 {
        let g = generate(&GenConfig::new(200, seed, 0.0)).map_err(|e| e.to_string())?;
        let (data, _) = standardize(&g.dataset).map_err(|e| e.to_string())?;
        let block = middle_block(&data, 100).map_err(|e| e.to_string())?;
        est.push(dimension_of(data.x(), &block));
    }
    let elapsed = start.elapsed();
    let med = median(est.clone());
    let inside = est.iter().filter(|d| (0.80..=1.40).contains(*d)).count();
    let detail = format!("median d_hat {med:.4}, {inside}/20 seeds in [0.80, 1.40]");
    if !(0.90..=1.25).contains(&med) || inside < 16 {
        return Err(detail);
    }
    within_time(detail, elapsed, 5.0)
}

fn c2_oracle_gap() -> Check {
    let start = Instant::now();
    let opts = ExperimentOptions::default();
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let r =
            run_experiment(&GenConfig::new(200, seed, 0.0), &opts).map_err(|e| e.to_string())?;
        if !r.mse_mll.is_finite() {
            return Err(format!("seed {seed}: mse_mll = {}", r.mse_mll));
        }
        ratios.push(r.mse_mll / r.mse_ull);
    }
    let med = median(ratios);
    let detail = format!("median mse_mll/mse_ull {med:.4} over 20 seeds");
    if med > 2.0 {
        return Err(detail);
    }
    within_time(detail, start.elapsed(), 120.0)
}

fn c3_noise() -> Check {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..500).collect();
    let rows = noise_sweep(&[0.02, 0.20], &seeds, 200, &ExperimentOptions::default())
        .map_err(|e| e.to_string())?;
    let ratio = rows[1].mean_mse / rows[0].mean_mse;
    let detail = format!(
        "mean mse_mll {:.5} at 0.02, {:.5} at 0.20 (ratio {ratio:.3}, 500 seeds)",
        rows[0].mean_mse, rows[1].mean_mse
    );
    if ratio > 2.0 {
        return Err(detail);
    }
    within_time(detail, start.elapsed(), 600.0)
}

fn c4_rate() -> Check {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..500).collect();
    let ns = [500, 1000, 2000, 4000, 8000];
    let r =
        rate_study(&PointStudy::blind_at(0.5), &ns, &seeds, 1.0, 1.0).map_err(|e| e.to_string())?;
    let slope = r.slope.ok_or_else(|| format!("no slope: {:?}", r.flag))?;
    let detail = format!("log-log slope {slope:.4} (500 seeds per n, lambda0 = 1)");
    if !(-0.95..=-0.65).contains(&slope) {
        return Err(detail);
    }
    within_time(detail, start.elapsed(), 900.0)
}

fn c5_scaling() -> Check {
    let start = Instant::now();
    let reps = 2000;
    // local linear in the latent-aligned coordinate, where the h^2 bias term
    // is not annihilated
    let study = PointStudy {
        columns: vec![0],
        ..PointStudy::blind_at(0.5)
    };
    let probe =
        |h: f64, n: usize| bias_variance_probe(&study, h, n, reps, 11).map_err(|e| e.to_string());
    let wide = probe(0.6, 4000)?;
    let narrow = probe(0.3, 4000)?;
    let doubled = probe(0.3, 8000)?;
    let bias_ratio = narrow.bias / wide.bias;
    let var_ratio = doubled.variance / narrow.variance;
    let detail = format!(
        "bias {:.5} -> {:.5} (ratio {bias_ratio:.3}), variance {:.3e} -> {:.3e} (ratio {var_ratio:.3})",
        wide.bias, narrow.bias, narrow.variance, doubled.variance
    );
    if !(0.15..=0.40).contains(&bias_ratio) || !(0.35..=0.65).contains(&var_ratio) {
        return Err(detail);
    }
    within_time(detail, start.elapsed(), 900.0)
}

fn c6_loo_identity() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempts = 0;
    while done < 50 {
        attempts += 1;
        if attempts > 1000 {
            return Err("could not draw 50 full-rank instances".into());
        }
        let n = rng.random_range(12..=50);
        let dim = rng.random_range(1..=3);
        let degree = rng.random_range(0..=1);
        let family = FAMILIES[done % 2];
        let x = uniform_points(&mut rng, n, dim, 0.0, 1.0);
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(x, y).unwrap();
        let h = rng.random_range(0.5..1.5) * (dim as f64).sqrt();
        let block: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
        if block.is_empty() {
            continue;
        }
        let basis = PolyBasis::new(dim, degree).unwrap();
        let (Ok(identity), Ok(direct)) = (
            mcv(&data, &block, h, &basis, family),
            mcv_direct(&data, &block, h, &basis, family),
        ) else {
            continue;
        };
        worst = worst.max((identity - direct).abs());
        done += 1;
    }
    let detail = format!("max |identity - refit| {worst:.2e} over 50 instances");
    if worst > 1e-8 {
        return Err(detail);
    }
    within_time(detail, start.elapsed(), 10.0)
}

fn c7_reproduction() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for degree in 0..=2 {
        for dim in 1..=3 {
            let basis = PolyBasis::new(dim, degree).unwrap();
            let coef: Vec<f64> = (0..basis.len())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let poly = |x: &[f64]| {
                let mut m = vec![0.0; basis.len()];
                basis.eval_into(x, &mut m);
                m.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()
            };
            let x = uniform_points(&mut rng, 200, dim, -1.0, 1.0);
            let y = x.rows().map(poly).collect();
            let data = Dataset::new(x, y).unwrap();
            for family in FAMILIES {
                let kernel = KernelSpec::new(family, 0.8, dim).unwrap();
                let mut done = 0;
                while done < 100 {
                    let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.9..0.9)).collect();
                    let Ok(fit) = local_fit(&data, &p, &kernel, &basis, None) else {
                        continue;
                    };
                    if !fit.is_full_rank() {
                        continue;
                    }
                    worst = worst.max((fit.fitted - poly(&p)).abs());
                    done += 1;
                }
            }
        }
    }
    let detail = format!("max error {worst:.2e} for q in 0..=2, D in 1..=3, both kernels");
    if worst > 1e-8 {
        return Err(detail);
    }
    within_time(detail, start.elapsed(), 10.0)
}

fn c8_neighbors() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut queries = 0;
    for set in 0..100 {
        let n = rng.random_range(1..=500);
        let dim = rng.random_range(1..=5);
        let mut x = uniform_points(&mut rng, n, dim, -3.0, 3.0);
        if set % 3 == 0 {
            // coarse lattice: many exact distance ties and duplicate points
            let flat = x.as_flat().iter().map(|v| v.round()).collect();
            x = PointSet::from_flat(flat, dim).unwrap();
        }
        let index = NeighborIndex::build(x.clone()).unwrap();
        for q in 0..10 {
            let query: Vec<f64> = if q % 2 == 0 {
                x.row(rng.random_range(0..n)).to_vec()
            } else {
                (0..dim).map(|_| rng.random_range(-3.5..3.5)).collect()
            };
            let exclude = (q % 4 == 0 && n > 1).then(|| rng.random_range(0..n));
            let avail = n - usize::from(exclude.is_some());
            let k = rng.random_range(1..=avail);
            let got = index.knn(&query, k, exclude).map_err(|e| e.to_string())?;
            let want = brute_force_knn(&x, &query, k, exclude);
            if got != want {
                return Err(format!("knn mismatch in set {set}, query {q}"));
            }
            let r = rng.random_range(0.1..3.0f64).round().max(0.5);
            let got = index.radius_query(&query, r).map_err(|e| e.to_string())?;
            let want: Vec<usize> = (0..n)
                .filter(|&i| euclidean(&query, x.row(i)) <= r)
                .collect();
            if got != want {
                return Err(format!("radius mismatch in set {set}, query {q}"));
            }
            queries += 1;
        }
    }
    within_time(
        format!("{queries} knn and radius queries on 100 sets match the scan"),
        start.elapsed(),
        10.0,
    )
}

fn rotate(points: &PointSet, angles: [f64; 3]) -> PointSet {
    let rows = points
        .rows()
        .map(|p| {
            let mut v = p.to_vec();
            for (axis, a) in angles.iter().enumerate() {
                let (i, j) = (axis, (axis + 1) % 3);
                let (s, c) = a.sin_cos();
                let (vi, vj) = (v[i], v[j]);
                v[i] = c * vi - s * vj;
                v[j] = s * vi + c * vj;
            }
            v
        })
        .collect();
    PointSet::from_rows(rows).unwrap()
}

fn map_points(points: &PointSet, f: impl Fn(&[f64]) -> Vec<f64>) -> PointSet {
    PointSet::from_rows(points.rows().map(f).collect()).unwrap()
}

fn c9_invariance() -> Check {
    let start = Instant::now();
    let g = generate(&GenConfig::new(200, 21, 0.05)).map_err(|e| e.to_string())?;
    let (data, _) = standardize(&g.dataset).map_err(|e| e.to_string())?;
    let block = middle_block(&data, 100).map_err(|e| e.to_string())?;
    let basis = PolyBasis::new(3, 1).unwrap();

    // kernel scale: X -> cX with h -> ch
    let c = 3.7;
    let scaled = Dataset::new(
        map_points(data.x(), |p| p.iter().map(|v| v * c).collect()),
        data.y().to_vec(),
    )
    .unwrap();
    let (sm, sm_scaled) = (
        LocalSmoother::new(&data).unwrap(),
        LocalSmoother::new(&scaled).unwrap(),
    );
    for family in FAMILIES {
        let k = KernelSpec::new(family, 1.2, 3).unwrap();
        let ks = KernelSpec::new(family, 1.2 * c, 3).unwrap();
        for &j in &block {
            let a = sm
                .local_fit(data.x().row(j), &k, &basis, None)
                .map_err(|e| e.to_string())?;
            let b = sm_scaled
                .local_fit(scaled.x().row(j), &ks, &basis, None)
                .map_err(|e| e.to_string())?;
            let (sa, sb) = (a.s_self.unwrap(), b.s_self.unwrap());
            if !rel_close(a.fitted, b.fitted, 1e-10) || !rel_close(sa, sb, 1e-10) {
                return Err(format!("kernel-scale mismatch at row {j} ({family})"));
            }
        }
    }

    // dimension estimate on raw manifold coordinates
    let raw = g.dataset.x();
    let d0 = dimension_of(raw, &block);
    let variants = [
        (
            "scale",
            map_points(raw, |p| p.iter().map(|v| v * 0.013).collect()),
        ),
        ("rotation", rotate(raw, [0.7, -1.9, 2.6])),
        ("padding", map_points(raw, |p| [p, &[0.0, 0.0]].concat())),
    ];
    for (name, pts) in &variants {
        let d = dimension_of(pts, &block);
        if !rel_close(d, d0, 1e-10) {
            return Err(format!("d_hat {name} variant {d} vs {d0}"));
        }
    }

    // response shift and scale in the bandwidth selection
    let grid = candidate_bandwidths(&default_lambdas(), data.len(), d0).unwrap();
    let family = KernelFamily::Epanechnikov;
    let base = select_bandwidth(&data, &block, &grid, &basis, family).map_err(|e| e.to_string())?;
    let shifted = data
        .with_responses(data.y().iter().map(|y| y + 7.5).collect())
        .unwrap();
    let sel_shift =
        select_bandwidth(&shifted, &block, &grid, &basis, family).map_err(|e| e.to_string())?;
    for (a, b) in base.scores.iter().zip(&sel_shift.scores) {
        match (a.mgcv, b.mgcv) {
            (Some(x), Some(y)) if rel_close(x, y, 1e-10) => {}
            (None, None) => {}
            other => return Err(format!("mgcv under shift at h {}: {other:?}", a.h)),
        }
    }
    if !rel_close(base.chosen, sel_shift.chosen, 1e-10) {
        return Err("selected h changed under response shift".into());
    }
    let scaled_y = data
        .with_responses(data.y().iter().map(|y| y * -4.25).collect())
        .unwrap();
    let sel_scale =
        select_bandwidth(&scaled_y, &block, &grid, &basis, family).map_err(|e| e.to_string())?;
    if sel_scale.chosen_index != base.chosen_index {
        return Err("argmin changed under response scaling".into());
    }
    within_time(
        format!(
            "kernel scale, d_hat scale/rotation/padding, response shift/scale hold (d_hat {d0:.4})"
        ),
        start.elapsed(),
        30.0,
    )
}

fn run_cli(args: &[String], out: &Path, threads: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_locreg"));
    cmd.args(args).arg("--output-dir").arg(out);
    match threads {
        Some(t) => cmd.env("LOCREG_THREADS", t),
        None => cmd.env_remove("LOCREG_THREADS"),
    };
    let o = cmd.output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn numeric_close(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y || (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0),
        _ => a == b,
    }
}

fn json_close(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => numeric_close(&x.to_string(), &y.to_string()),
        (Array(x), Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(u, v)| json_close(u, v))
        }
        (Object(x), Object(y)) => {
            x.len() == y.len()
                && x.iter()
                    .all(|(k, u)| k == "output_dir" || y.get(k).is_some_and(|v| json_close(u, v)))
        }
        _ => a == b,
    }
}

fn outputs_close(name: &str, a: &[u8], b: &[u8]) -> bool {
    let (a, b) = (String::from_utf8_lossy(a), String::from_utf8_lossy(b));
    if name.ends_with(".json") {
        let (a, b): (serde_json::Value, serde_json::Value) = (
            serde_json::from_str(&a).unwrap(),
            serde_json::from_str(&b).unwrap(),
        );
        return json_close(&a, &b);
    }
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    la.len() == lb.len()
        && la.iter().zip(&lb).all(|(x, y)| {
            let (fx, fy): (Vec<&str>, Vec<&str>) = (x.split(',').collect(), y.split(',').collect());
            fx.len() == fy.len() && fx.iter().zip(&fy).all(|(u, v)| numeric_close(u, v))
        })
}

fn c10_determinism() -> Check {
    let start = Instant::now();
    let data_dir = TempDir::new().unwrap();
    run_cli(
        &[
            "generate".into(),
            "--n".into(),
            "200".into(),
            "--seed".into(),
            "5".into(),
        ],
        data_dir.path(),
        None,
    )?;
    let input = data_dir
        .path()
        .join("data.csv")
        .to_string_lossy()
        .into_owned();
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "generate",
            "--n",
            "300",
            "--seed",
            "3",
            "--sigma-prime",
            "0.1",
        ],
        vec!["estimate-dim", "--input", &input],
        vec![
            "select-bandwidth",
            "--input",
            &input,
            "--kernel",
            "gaussian",
        ],
        vec!["fit", "--input", &input],
        vec!["experiment", "--seed", "8"],
        vec!["noise-sweep", "--reps", "3", "--sweep", "0.02,0.2"],
        vec!["rate-study", "--reps", "5", "--ns", "200,400,800,1600"],
    ];
    for args in &commands {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let dir = TempDir::new().unwrap();
        run_cli(&args, dir.path(), None)?;
        let first = snapshot(dir.path());
        run_cli(&args, dir.path(), None)?;
        if snapshot(dir.path()) != first {
            return Err(format!("{} outputs differ between identical runs", args[0]));
        }
        let (one, four) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        run_cli(&args, one.path(), Some("1"))?;
        run_cli(&args, four.path(), Some("4"))?;
        let (s1, s4) = (snapshot(one.path()), snapshot(four.path()));
        if s1.keys().ne(s4.keys()) {
            return Err(format!(
                "{}: different output files across thread counts",
                args[0]
            ));
        }
        for (name, bytes) in &s1 {
            if !outputs_close(name, bytes, &s4[name]) {
                return Err(format!(
                    "{}: {name} differs between 1 and 4 threads",
                    args[0]
                ));
            }
        }
    }
    within_time(
        "7 commands byte-identical on rerun and within 1e-12 across 1 and 4 threads".into(),
        start.elapsed(),
        60.0,
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("dimension estimate", c1_dimension),
        ("oracle vs blind gap", c2_oracle_gap),
        ("noise robustness", c3_noise),
        ("rate exponent", c4_rate),
        ("bias and variance scaling", c5_scaling),
        ("leave-one-out identity", c6_loo_identity),
        ("polynomial reproduction", c7_reproduction),
        ("neighbor exactness", c8_neighbors),
        ("invariance suite", c9_invariance),
        ("determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {id:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
