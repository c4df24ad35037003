use std::path::PathBuf;

use locreg::bandwidth::{candidate_bandwidths, select_bandwidth_with, BandwidthSelection};
use locreg::dimest::estimate_dimension;
use locreg::synth::{
    self, generate, manifold_point, middle_block, noise_sweep, rate_study, ExperimentOptions,
    GenConfig, PointStudy,
};
use locreg::{standardize, Dataset, DimEstimate, Error, KernelSpec, LocalSmoother, PolyBasis};
use serde_json::{json, Value};

use crate::config::{CommandKind, RunConfig};
use crate::error::CliError;
use crate::io::{
    fmt_f64, read_dataset, read_points, write_csv, write_dataset, write_json, x_header,
};

type CmdResult = Result<Value, CliError>;

pub fn run(cfg: &RunConfig) -> CmdResult {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    match cfg.command {
        CommandKind::Generate => cmd_generate(cfg),
        CommandKind::EstimateDim => cmd_estimate_dim(cfg),
        CommandKind::SelectBandwidth => cmd_select_bandwidth(cfg),
        CommandKind::Fit => cmd_fit(cfg),
        CommandKind::Experiment => cmd_experiment(cfg),
        CommandKind::NoiseSweep => cmd_noise_sweep(cfg),
        CommandKind::RateStudy => cmd_rate_study(cfg),
    }
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn gen_config(cfg: &RunConfig) -> GenConfig {
    GenConfig::new(cfg.n, cfg.seed, cfg.sigma_prime)
}

fn experiment_options(cfg: &RunConfig) -> ExperimentOptions {
    ExperimentOptions {
        block_size: cfg.block_size,
        k: cfg.k,
        lambdas: cfg.lambdas.clone(),
        kernel: cfg.kernel,
        degree: cfg.degree,
    }
}

/// The dataset named by `--input`, or a fresh draw from the generator.
fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.input {
        Some(path) => read_dataset(path),
        None => Ok(generate(&gen_config(cfg))?.dataset),
    }
}

struct Prepared {
    raw: Dataset,
    work: Dataset,
    standardizer: Option<locreg::Standardizer>,
    block: Vec<usize>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let raw = load_data(cfg)?;
    let (work, standardizer) = if cfg.standardize {
        let (w, s) = standardize(&raw)?;
        (w, Some(s))
    } else {
        (raw.clone(), None)
    };
    let block = match &cfg.block_ids {
        Some(ids) => ids.clone(),
        None => middle_block(&work, cfg.block_size)?,
    };
    Ok(Prepared {
        raw,
        work,
        standardizer,
        block,
    })
}

fn dimension(
    cfg: &RunConfig,
    p: &Prepared,
    smoother: &LocalSmoother<'_>,
) -> Result<DimEstimate, CliError> {
    Ok(estimate_dimension(
        p.work.x(),
        &p.block,
        cfg.k,
        smoother.index(),
    )?)
}

struct Selected {
    d: f64,
    d_estimated: bool,
    selection: BandwidthSelection,
    lambdas: Vec<f64>,
}

fn select(
    cfg: &RunConfig,
    p: &Prepared,
    smoother: &LocalSmoother<'_>,
) -> Result<Selected, CliError> {
    let (d, d_estimated) = match cfg.dim {
        Some(d) => (d, false),
        None => (dimension(cfg, p, smoother)?.d_hat, true),
    };
    let grid = candidate_bandwidths(&cfg.lambdas, p.work.len(), d)?;
    let basis = PolyBasis::new(p.work.dim(), cfg.degree)?;
    let selection = select_bandwidth_with(smoother, &p.block, &grid, &basis, cfg.kernel)?;
    Ok(Selected {
        d,
        d_estimated,
        selection,
        lambdas: grid.lambdas,
    })
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

fn cmd_generate(cfg: &RunConfig) -> CmdResult {
    let g = generate(&gen_config(cfg))?;
    write_dataset(&out(cfg, "data.csv"), &g.dataset)?;
    let rows: Vec<Vec<String>> = g
        .latent
        .iter()
        .zip(&g.truth)
        .map(|(t, m)| vec![fmt_f64(*t), fmt_f64(*m)])
        .collect();
    write_csv(
        &out(cfg, "truth.csv"),
        &["t".into(), "m_true".into()],
        &rows,
    )?;
    let summary = json!({ "config": cfg, "n": g.dataset.len(), "dim": g.dataset.dim() });
    write_json(&out(cfg, "generate.json"), &summary)?;
    Ok(summary)
}

fn cmd_estimate_dim(cfg: &RunConfig) -> CmdResult {
    let p = prepare(cfg)?;
    let smoother = LocalSmoother::new(&p.work)?;
    let est = dimension(cfg, &p, &smoother)?;
    let rows: Vec<Vec<String>> = est
        .per_point
        .iter()
        .map(|(id, m)| vec![id.to_string(), fmt_f64(*m)])
        .collect();
    write_csv(
        &out(cfg, "dimension_points.csv"),
        &["row".into(), "estimate".into()],
        &rows,
    )?;
    let summary = json!({
        "config": cfg,
        "d_hat": est.d_hat,
        "k": est.k,
        "block_size": p.block.len(),
        "skipped": est.skipped,
    });
    write_json(&out(cfg, "dimension.json"), &summary)?;
    Ok(summary)
}

fn cmd_select_bandwidth(cfg: &RunConfig) -> CmdResult {
    let p = prepare(cfg)?;
    let smoother = LocalSmoother::new(&p.work)?;
    let sel = select(cfg, &p, &smoother)?;
    let rows: Vec<Vec<String>> = sel
        .selection
        .scores
        .iter()
        .zip(&sel.lambdas)
        .map(|(s, l)| {
            vec![
                fmt_f64(*l),
                fmt_f64(s.h),
                opt_f64(s.atr),
                opt_f64(s.rss_block),
                opt_f64(s.mgcv),
                s.is_feasible().to_string(),
            ]
        })
        .collect();
    let header = ["lambda", "h", "atr", "rss", "mgcv", "feasible"].map(String::from);
    write_csv(&out(cfg, "bandwidth_scores.csv"), &header, &rows)?;
    let summary = json!({
        "config": cfg,
        "d": sel.d,
        "d_estimated": sel.d_estimated,
        "chosen_h": sel.selection.chosen,
        "chosen_lambda": sel.lambdas[sel.selection.chosen_index],
        "feasible_candidates": sel.selection.scores.iter().filter(|s| s.is_feasible()).count(),
    });
    write_json(&out(cfg, "bandwidth.json"), &summary)?;
    Ok(summary)
}

fn cmd_fit(cfg: &RunConfig) -> CmdResult {
    let p = prepare(cfg)?;
    let smoother = LocalSmoother::new(&p.work)?;
    let (h, selected) = match cfg.h {
        Some(h) => (h, None),
        None => {
            let s = select(cfg, &p, &smoother)?;
            (s.selection.chosen, Some(s.d))
        }
    };
    let dim = p.work.dim();
    let kernel = KernelSpec::new(cfg.kernel, h, dim)?;
    let basis = PolyBasis::new(dim, cfg.degree)?;

    let eval_raw = match &cfg.eval {
        Some(path) => read_points(path)?,
        None => p.raw.x().clone(),
    };
    if eval_raw.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: eval_raw.dim(),
        }
        .into());
    }
    let mut rows = Vec::with_capacity(eval_raw.len());
    let (mut rank_deficient, mut no_support) = (0usize, 0usize);
    for point in eval_raw.rows() {
        let x = match &p.standardizer {
            Some(s) => s.apply(point),
            None => point.to_vec(),
        };
        let mut row: Vec<String> = point.iter().map(|v| fmt_f64(*v)).collect();
        match smoother.local_fit(&x, &kernel, &basis, None) {
            Ok(fit) => {
                rank_deficient += usize::from(!fit.is_full_rank());
                row.extend([
                    fmt_f64(fit.fitted),
                    fmt_f64(h),
                    fit.support_count.to_string(),
                    fit.effective_rank.to_string(),
                ]);
            }
            Err(Error::NoSupport { .. }) => {
                no_support += 1;
                row.extend(["NA".into(), fmt_f64(h), "0".into(), "0".into()]);
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    let mut header = x_header(dim);
    header.extend(["m_hat", "h", "support_count", "effective_rank"].map(String::from));
    write_csv(&out(cfg, "predictions.csv"), &header, &rows)?;
    let summary = json!({
        "config": cfg,
        "h": h,
        "d": selected,
        "points": rows.len(),
        "rank_deficient": rank_deficient,
        "no_support": no_support,
    });
    write_json(&out(cfg, "fit.json"), &summary)?;
    Ok(summary)
}

fn cmd_experiment(cfg: &RunConfig) -> CmdResult {
    if cfg.input.is_some() {
        return Err(CliError::Config(
            "experiment draws its own data; --input is not accepted".into(),
        ));
    }
    let r = synth::run_experiment(&gen_config(cfg), &experiment_options(cfg))?;
    let rows: Vec<Vec<String>> = r
        .curve
        .iter()
        .map(|c| {
            vec![
                c.row.to_string(),
                fmt_f64(c.x1_std),
                fmt_f64(c.truth),
                fmt_f64(c.ull),
                fmt_f64(c.mll),
            ]
        })
        .collect();
    let header = ["row", "x1_std", "m_true", "ull", "mll"].map(String::from);
    write_csv(&out(cfg, "experiment_curve.csv"), &header, &rows)?;
    let summary = json!({
        "config": cfg,
        "seed": r.seed,
        "d_hat": r.d_hat,
        "h_ull": r.h_ull,
        "h_mll": r.h_mll,
        "mse_ull": r.mse_ull,
        "mse_mll": r.mse_mll,
        "block": r.block,
    });
    write_json(&out(cfg, "experiment.json"), &summary)?;
    Ok(summary)
}

fn cmd_noise_sweep(cfg: &RunConfig) -> CmdResult {
    let rows = noise_sweep(&cfg.sweep, &cfg.seeds(), cfg.n, &experiment_options(cfg))?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.sigma_prime),
                fmt_f64(r.mean_mse),
                fmt_f64(r.sd_mse),
            ]
        })
        .collect();
    let header = ["sigma_prime", "mean_mse", "sd_mse"].map(String::from);
    write_csv(&out(cfg, "noise_sweep.csv"), &header, &table)?;
    let levels: Vec<Value> = rows
        .iter()
        .map(
            |r| json!({ "sigma_prime": r.sigma_prime, "mean_mse": r.mean_mse, "sd_mse": r.sd_mse }),
        )
        .collect();
    let summary = json!({ "config": cfg, "levels": levels });
    write_json(&out(cfg, "noise_sweep.json"), &summary)?;
    Ok(summary)
}

fn cmd_rate_study(cfg: &RunConfig) -> CmdResult {
    let study = PointStudy {
        degree: cfg.degree,
        kernel: cfg.kernel,
        sigma_prime: cfg.sigma_prime,
        ..PointStudy::blind_at(cfg.eval_t)
    };
    let d = cfg.dim.unwrap_or(1.0);
    let r = rate_study(&study, &cfg.ns, &cfg.seeds(), cfg.lambda0, d)?;
    let table: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| vec![row.n.to_string(), fmt_f64(row.h), fmt_f64(row.mse)])
        .collect();
    let header = ["n", "h", "mse"].map(String::from);
    write_csv(&out(cfg, "rate_study.csv"), &header, &table)?;
    let summary = json!({
        "config": cfg,
        "eval_point": manifold_point(cfg.eval_t),
        "intrinsic_dim": d,
        "slope": r.slope,
        "flag": r.flag,
    });
    write_json(&out(cfg, "rate_study.json"), &summary)?;
    Ok(summary)
}
