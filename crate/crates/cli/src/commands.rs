use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use qtdlab::config::{load_config, EnvFile};
use qtdlab::dp::{fixed_point_error_curve_with, DpAlgo, DpOptions};
use qtdlab::harness::{improvement_from_summaries, optimal_mse, sweep, ExperimentConfig, HarnessError, SweepSummary, PAPER_N_RUNS};
use qtdlab::report::{read_sweep, write_csv, write_improvement, write_sweep, FixedPointRow};
use qtdlab::{make_env, EnvSpec, ImprovementCurve, RewardKind, TransitionKind};

use crate::{Failure, FixedPointArgs, GenEnvArgs, ImprovementArgs, RunSweepArgs};

/// Writes `bytes` to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?;
        }
        None => std::io::stdout().write_all(bytes).context("writing to standard output")?,
    }
    Ok(())
}

/// Classifies harness errors: exhausted learning-rate grids are numerical
/// failures, everything else is a usage error.
pub fn harness_failure(e: HarnessError) -> Failure {
    match e {
        HarnessError::AllInfinite { .. } => Failure::Numerical(e.into()),
        other => Failure::Usage(other.into()),
    }
}

pub fn env_spec(a: &GenEnvArgs) -> Result<EnvSpec, Failure> {
    let kind: TransitionKind = a.kind.parse()?;
    let rewards: RewardKind = a.rewards.parse()?;
    let mut spec = EnvSpec::new(kind, rewards).with_seed(a.seed);
    if let Some(n) = a.n {
        spec.n_states = n;
    }
    if let Some(b) = a.branching {
        spec.branching = b;
    }
    if let Some(g) = a.gamma {
        spec.gamma = g;
    }
    if let Some(s) = a.reward_scale {
        spec.reward_scale = s;
    }
    if let Some(k) = a.skew {
        spec.skew = k;
    }
    if let Some(p) = a.skew_prob {
        spec.skew_prob = p;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn gen_env(a: &GenEnvArgs) -> Result<(), Failure> {
    let spec = env_spec(a)?;
    let mrp = make_env::<f64>(&spec)?;
    let text = EnvFile::new(Some(spec), &mrp).to_toml()?;
    emit(a.out.as_deref(), text.as_bytes())
}

/// File name of a sweep CSV, e.g. `garnet-gaussian-s0__qtd128.csv`.
pub fn sweep_file_name(cfg: &ExperimentConfig) -> String {
    let agent = match cfg.effective_m() {
        0 => cfg.agent.to_string(),
        m => format!("{}{m}", cfg.agent),
    };
    format!("{}__{agent}.csv", cfg.env.env_id())
}

/// One summary line for a finished sweep, at its last checkpoint.
pub fn summary_line(cfg: &ExperimentConfig, summary: &SweepSummary) -> Result<String, Failure> {
    let c = *summary.checkpoints().last().ok_or_else(|| anyhow!("sweep recorded no checkpoints"))?;
    let o = optimal_mse(summary, c).map_err(harness_failure)?;
    let label = match cfg.effective_m() {
        0 => cfg.agent.to_string(),
        m => format!("{}({m})", cfg.agent),
    };
    Ok(format!(
        "{} {label}: optimal lr {:.4e}, mse {:.4e} ± {:.1e} after {c} updates ({} diverged runs)",
        cfg.env.env_id(),
        o.lr,
        o.mse_mean,
        o.mse_stderr,
        summary.total_diverged()
    ))
}

/// Runs one sweep and writes its CSV into `dir`.
pub fn sweep_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, SweepSummary), Failure> {
    let summary = sweep(cfg).map_err(harness_failure)?;
    let path = dir.join(sweep_file_name(cfg));
    let mut buf = Vec::new();
    write_sweep(&mut buf, &summary)?;
    emit(Some(&path), &buf)?;
    Ok((path, summary))
}

pub fn run_sweep(a: &RunSweepArgs) -> Result<(), Failure> {
    let mut cfgs = load_config(&a.config)?;
    for cfg in &mut cfgs {
        if a.paper_scale {
            cfg.n_runs = PAPER_N_RUNS;
        }
        if let Some(r) = a.runs {
            cfg.n_runs = r;
        }
        if let Some(s) = a.seed {
            cfg.base_seed = s;
        }
        cfg.validate().map_err(harness_failure)?;
    }
    let mut numerical = None;
    for cfg in &cfgs {
        let (path, summary) = sweep_to_dir(cfg, &a.out)?;
        match summary_line(cfg, &summary) {
            Ok(line) => println!("{line} -> {}", path.display()),
            Err(Failure::Numerical(e)) => {
                eprintln!("{}: {e}", cfg.env.env_id());
                numerical = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match numerical {
        Some(e) => Err(Failure::Numerical(e)),
        None => Ok(()),
    }
}

pub fn fixed_point(a: &FixedPointArgs) -> Result<(), Failure> {
    let algo: DpAlgo = a.algo.parse().map_err(|e: String| anyhow!(e))?;
    if a.m.is_empty() || a.m.contains(&0) {
        return Err(anyhow!("--m needs positive quantile counts").into());
    }
    if !(a.tolerance > 0.0) || a.max_iterations == 0 {
        return Err(anyhow!("--tolerance and --max-iterations must be positive").into());
    }
    let text = fs::read_to_string(&a.env).with_context(|| format!("reading {}", a.env.display()))?;
    let file = EnvFile::from_toml(&text).with_context(|| format!("parsing {}", a.env.display()))?;
    let mrp = file.mrp::<f64>()?;
    let opts = DpOptions { tolerance: a.tolerance, max_iterations: a.max_iterations };
    let points = fixed_point_error_curve_with(&mrp, &a.m, algo, opts).map_err(|e| Failure::Numerical(e.into()))?;
    let env_id = file.env_id();
    let rows: Vec<FixedPointRow> = points.iter().map(|p| FixedPointRow::from_point(&env_id, p)).collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows)?;
    emit(a.out.as_deref(), &buf)?;
    let stalled: Vec<usize> = rows.iter().filter(|r| !r.converged).map(|r| r.m).collect();
    if stalled.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(anyhow!("no convergence within {} iterations for m = {stalled:?}", a.max_iterations)))
    }
}

pub fn read_sweep_file(path: &Path) -> Result<SweepSummary, Failure> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_sweep(f).with_context(|| format!("reading {}", path.display()))?)
}

pub fn write_curve(path: Option<&Path>, curve: &ImprovementCurve) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_improvement(&mut buf, curve)?;
    emit(path, &buf)
}

pub fn improvement(a: &ImprovementArgs) -> Result<(), Failure> {
    let sa = read_sweep_file(&a.a)?;
    let sb = read_sweep_file(&a.b)?;
    let curve = improvement_from_summaries(&sa, &sb).map_err(harness_failure)?;
    write_curve(a.out.as_deref(), &curve)?;
    if a.out.is_some() {
        for p in &curve.points {
            println!("{} checkpoint {}: ratio {:.4} ± {:.4}", curve.env_id, p.checkpoint, p.ratio, p.ratio_stderr());
        }
    }
    Ok(())
}
