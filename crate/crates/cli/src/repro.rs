//! Desk-scale reproduction: learning-rate sweeps, improvement curves, the
//! reward-scale ablation and the fixed-point bound table.

use std::path::Path;
use std::time::Instant;

use anyhow::anyhow;
use qtdlab::dp::{fixed_point_error_curve, DpAlgo};
use qtdlab::harness::{improvement_from_summaries, ExperimentConfig, DEFAULT_N_RUNS, DEFAULT_N_UPDATES};
use qtdlab::report::{write_csv, FixedPointRow};
use qtdlab::{make_env, AgentKind, EnvSpec, ImprovementCurve, RewardKind, TransitionKind};

use crate::commands::{emit, harness_failure, summary_line, sweep_to_dir, write_curve};
use crate::plots::{error_vs_m, improvement_vs_updates, mse_vs_lr, optimal_lr_vs_updates, write_svg};
use crate::{Failure, ReproArgs};

const STRUCTURES: [TransitionKind; 3] = [TransitionKind::Dirichlet, TransitionKind::Garnet, TransitionKind::Cycle];
const MAIN_REWARDS: [RewardKind; 3] = [RewardKind::PointMass, RewardKind::Gaussian, RewardKind::Exponential];
const SIGMAS: [f64; 5] = [0.01, 0.1, 0.3, 1.0, 3.0];
const M_GRID: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 128];
const SWEEP_CHECKPOINT: usize = 1000;

struct Scale {
    n_runs: usize,
    n_updates: usize,
    seed: Option<u64>,
}

impl Scale {
    fn config(&self, env: EnvSpec, agent: AgentKind, m: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(env, agent, m).with_updates(self.n_updates).with_runs(self.n_runs);
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        cfg
    }
}

/// TD and QTD(128) sweeps on one environment, their CSVs, the learning-rate
/// panel and the improvement curve.
fn compare(env: EnvSpec, scale: &Scale, out: &Path) -> Result<ImprovementCurve, Failure> {
    let td = scale.config(env.clone(), AgentKind::Td, 1);
    let qtd = scale.config(env.clone(), AgentKind::Qtd, 128);
    let (_, s_td) = sweep_to_dir(&td, &out.join("sweeps"))?;
    let (_, s_qtd) = sweep_to_dir(&qtd, &out.join("sweeps"))?;
    for (cfg, s) in [(&td, &s_td), (&qtd, &s_qtd)] {
        println!("  {}", summary_line(cfg, s)?);
    }
    let c = SWEEP_CHECKPOINT.min(scale.n_updates);
    let fig = mse_vs_lr(&[s_td.clone(), s_qtd.clone()], Some(c))?;
    write_svg(&out.join("figures").join(format!("mse_vs_lr_{}.svg", env.env_id())), &fig)?;
    let curve = improvement_from_summaries(&s_qtd, &s_td).map_err(harness_failure)?;
    write_curve(Some(&out.join("improvement").join(format!("{}.csv", env.env_id()))), &curve)?;
    Ok(curve)
}

fn stage(name: &str, start: Instant) {
    println!("[{name}] done at {:.1}s", start.elapsed().as_secs_f64());
}

pub fn repro(a: &ReproArgs) -> Result<(), Failure> {
    let scale = Scale {
        n_runs: a.runs.unwrap_or(if a.quick { 20 } else { DEFAULT_N_RUNS }),
        n_updates: a.updates.unwrap_or(if a.quick { SWEEP_CHECKPOINT } else { DEFAULT_N_UPDATES }),
        seed: a.seed,
    };
    if scale.n_runs == 0 || scale.n_updates == 0 {
        return Err(anyhow!("--runs and --updates must be positive").into());
    }
    let out = a.out.as_path();
    let figures = out.join("figures");
    let start = Instant::now();
    println!(
        "reproduction into {}: {} runs x {} updates per learning rate, 40 learning rates per sweep",
        out.display(),
        scale.n_runs,
        scale.n_updates
    );

    let mut main_curves = Vec::new();
    for t in STRUCTURES {
        let mut row = Vec::new();
        for r in MAIN_REWARDS {
            let curve = compare(EnvSpec::new(t, r), &scale, out)?;
            row.push(curve.clone());
            main_curves.push(curve);
        }
        write_svg(&figures.join(format!("improvement_{t}.svg")), &improvement_vs_updates(&row))?;
    }
    write_svg(&figures.join("optimal_lr_main.svg"), &optimal_lr_vs_updates(&main_curves))?;
    stage("main suite", start);

    let mut t2 = Vec::new();
    for t in STRUCTURES {
        t2.push(compare(EnvSpec::new(t, RewardKind::StudentT2), &scale, out)?);
    }
    write_svg(&figures.join("improvement_student_t2.svg"), &improvement_vs_updates(&t2))?;
    stage("heavy-tailed rewards", start);

    let mut scaled = Vec::new();
    for sigma in SIGMAS {
        scaled.push(compare(EnvSpec::new(TransitionKind::Cycle, RewardKind::Gaussian).with_reward_scale(sigma), &scale, out)?);
    }
    write_svg(&figures.join("improvement_reward_scale.svg"), &improvement_vs_updates(&scaled))?;
    stage("reward-scale ablation", start);

    let mut rows = Vec::new();
    for r in [RewardKind::PointMass, RewardKind::Gaussian] {
        for t in STRUCTURES {
            let spec = EnvSpec::new(t, r);
            let mrp = make_env::<f64>(&spec)?;
            let points = fixed_point_error_curve(&mrp, &M_GRID, DpAlgo::Qtd).map_err(|e| Failure::Numerical(e.into()))?;
            rows.extend(points.iter().map(|p| FixedPointRow::from_point(&spec.env_id(), p)));
        }
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows)?;
    emit(Some(&out.join("fixed_point").join("bounds.csv")), &buf)?;
    write_svg(&figures.join("error_vs_m.svg"), &error_vs_m(&rows))?;
    println!("{:<28} {:>4} {:>12} {:>12} {:>12}  ok", "environment", "m", "error", "bound_41", "bound_42");
    let mut violated = Vec::new();
    for r in &rows {
        let ok = r.converged && r.value_error_sup <= r.bound_41.min(r.bound_42) + 1e-8;
        if !ok {
            violated.push(format!("{} m={}", r.env_id, r.m));
        }
        println!("{:<28} {:>4} {:>12.4e} {:>12.4e} {:>12.4e}  {}", r.env_id, r.m, r.value_error_sup, r.bound_41, r.bound_42, ok);
    }
    stage("fixed-point bounds", start);
    println!("wall-clock: {:.1}s", start.elapsed().as_secs_f64());
    if violated.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(anyhow!("bound check failed or did not converge: {}", violated.join(", "))))
    }
}
