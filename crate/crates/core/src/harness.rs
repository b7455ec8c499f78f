//! Online-training experiments: learning-rate sweeps over many seeded runs,
//! optimal-MSE extraction and improvement ratios between two learners.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, Learner, PqtdLearner, QtdLearner, TdLearner};
use crate::env::{make_env, EnvError, EnvSpec};
use crate::mrp::Mrp;
use crate::reward::RewardKind;
use crate::rng::{mix_seed, RngStream};
use crate::scalar::{cast, pairwise_sum, to_f64, Real};
use crate::tables::ValueTable;

pub const LR_GRID_POINTS: usize = 40;
pub const TD_LR_RANGE: (f64, f64) = (5e-4, 1.0);
pub const QUANTILE_LR_RANGE: (f64, f64) = (5e-3, 10.0);
pub const DEFAULT_N_RUNS: usize = 200;
pub const PAPER_N_RUNS: usize = 1000;
pub const DEFAULT_N_UPDATES: usize = 10_000;
pub const DEFAULT_CHECKPOINTS: [usize; 7] = [10, 30, 100, 300, 1000, 3000, 10_000];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    /// Every learning rate diverged at this checkpoint.
    #[error("every learning rate has infinite mean MSE at checkpoint {checkpoint}")]
    AllInfinite { checkpoint: usize },
    #[error("checkpoint {0} was not recorded")]
    MissingCheckpoint(usize),
    #[error("summaries cannot be compared: {0}")]
    Mismatch(String),
}

/// How the state of each update is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// One Markov-chain trajectory from a uniformly drawn initial state.
    #[default]
    Trajectory,
    /// A fresh uniformly drawn state before every update.
    IidUniform,
}

/// State weighting of the squared error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseWeighting {
    #[default]
    Uniform,
    Stationary,
}

/// `n` points from `lo` to `hi`, equally spaced in log-space, with both
/// endpoints reproduced exactly.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / (n - 1) as f64;
            let mut out: Vec<f64> = (0..n).map(|k| (a + step * k as f64).exp()).collect();
            out[0] = lo;
            out[n - 1] = hi;
            out
        }
    }
}

pub fn default_lr_grid(agent: AgentKind) -> Vec<f64> {
    let (lo, hi) = match agent {
        AgentKind::Td => TD_LR_RANGE,
        AgentKind::Qtd | AgentKind::Pqtd => QUANTILE_LR_RANGE,
    };
    log_spaced(lo, hi, LR_GRID_POINTS)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentKind,
    /// Number of quantiles; ignored for TD.
    pub m: usize,
    pub lr_grid: Vec<f64>,
    pub n_updates: usize,
    pub checkpoints: Vec<usize>,
    pub n_runs: usize,
    pub base_seed: u64,
    pub start: StartMode,
    pub weighting: MseWeighting,
}

impl ExperimentConfig {
    /// Defaults: the agent's standard grid, the standard checkpoints up to
    /// `DEFAULT_N_UPDATES`, `DEFAULT_N_RUNS` runs.
    pub fn new(env: EnvSpec, agent: AgentKind, m: usize) -> Self {
        ExperimentConfig {
            env,
            agent,
            m,
            lr_grid: default_lr_grid(agent),
            n_updates: DEFAULT_N_UPDATES,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            n_runs: DEFAULT_N_RUNS,
            base_seed: 0,
            start: StartMode::default(),
            weighting: MseWeighting::default(),
        }
    }

    /// Sets `n_updates` and keeps the default checkpoints that fit, plus
    /// `n_updates` itself.
    pub fn with_updates(mut self, n_updates: usize) -> Self {
        self.n_updates = n_updates;
        self.checkpoints = DEFAULT_CHECKPOINTS.iter().copied().filter(|&c| c < n_updates).collect();
        self.checkpoints.push(n_updates);
        self
    }

    pub fn with_runs(mut self, n_runs: usize) -> Self {
        self.n_runs = n_runs;
        self
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    /// Agent label for reports, e.g. `qtd` with `m` carried separately.
    pub fn effective_m(&self) -> usize {
        if self.agent == AgentKind::Td {
            0
        } else {
            self.m
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        if self.lr_grid.is_empty() {
            return Err(HarnessError::Invalid("learning-rate grid is empty".into()));
        }
        if self.lr_grid.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(HarnessError::Invalid("learning rates must be positive and finite".into()));
        }
        if self.lr_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Invalid("learning-rate grid must be strictly ascending".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(HarnessError::Invalid("no checkpoints".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Invalid("checkpoints must be strictly ascending".into()));
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c > self.n_updates) {
            return Err(HarnessError::Invalid(format!("checkpoint {c} exceeds n_updates = {}", self.n_updates)));
        }
        if self.n_runs == 0 {
            return Err(HarnessError::Invalid("n_runs must be positive".into()));
        }
        if self.agent.uses_quantiles() && self.m == 0 {
            return Err(HarnessError::Invalid("number of quantiles must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a single run needs besides its step size and seed.
#[derive(Clone, Debug)]
pub struct RunContext<T> {
    pub mrp: Mrp<T>,
    pub truth: ValueTable<T>,
    pub weights: Vec<f64>,
    pub agent: AgentKind,
    pub m: usize,
    pub checkpoints: Vec<usize>,
    pub start: StartMode,
}

impl<T: Real> RunContext<T> {
    pub fn new(mrp: Mrp<T>, agent: AgentKind, m: usize, checkpoints: Vec<usize>, start: StartMode, weighting: MseWeighting) -> Self {
        let n = mrp.n_states();
        let weights = match weighting {
            MseWeighting::Uniform => vec![1.0 / n as f64; n],
            MseWeighting::Stationary => mrp.stationary_distribution().into_iter().map(to_f64).collect(),
        };
        let truth = mrp.true_value();
        RunContext { mrp, truth, weights, agent, m, checkpoints, start }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mrp = make_env::<T>(&cfg.env)?;
        Ok(Self::new(mrp, cfg.agent, cfg.m, cfg.checkpoints.clone(), cfg.start, cfg.weighting))
    }

    /// MSE at each checkpoint of one run. Non-finite estimates give `+inf`
    /// for that checkpoint and every later one.
    pub fn run(&self, lr: f64, seed: u64) -> Vec<f64> {
        let n = self.mrp.n_states();
        let g = self.mrp.gamma();
        match self.agent {
            AgentKind::Td => self.drive(TdLearner::new(n, g), lr, seed),
            AgentKind::Qtd => self.drive(QtdLearner::new(n, self.m, g), lr, seed),
            AgentKind::Pqtd => self.drive(PqtdLearner::new(n, self.m, g), lr, seed),
        }
    }

    fn drive<L: Learner<T>>(&self, mut learner: L, lr: f64, seed: u64) -> Vec<f64> {
        let n = self.mrp.n_states();
        let alpha: T = cast(lr);
        let mut rng = RngStream::new(seed);
        let mut x = rng.index(n);
        let mut out = Vec::with_capacity(self.checkpoints.len());
        let mut done = 0;
        for &c in &self.checkpoints {
            while done < c {
                if self.start == StartMode::IidUniform {
                    x = rng.index(n);
                }
                let t = self.mrp.step(x, &mut rng);
                learner.observe(&t, alpha);
                x = t.x_next;
                done += 1;
            }
            let mse = learner.values().weighted_sq_error(&self.truth, &self.weights);
            out.push(mse);
            if mse.is_infinite() {
                break;
            }
        }
        out.resize(self.checkpoints.len(), f64::INFINITY);
        out
    }
}

/// One run: `(checkpoint, mse)` pairs, deterministic in `seed`.
pub fn run_single<T: Real>(
    mrp: &Mrp<T>,
    agent: AgentKind,
    m: usize,
    lr: f64,
    checkpoints: &[usize],
    seed: u64,
) -> Vec<(usize, f64)> {
    let ctx = RunContext::new(mrp.clone(), agent, m, checkpoints.to_vec(), StartMode::Trajectory, MseWeighting::Uniform);
    checkpoints.iter().copied().zip(ctx.run(lr, seed)).collect()
}

/// Aggregated result at one `(lr, checkpoint)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub env_id: String,
    pub agent: AgentKind,
    pub m: usize,
    pub lr: f64,
    pub checkpoint: usize,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub n_runs: usize,
    pub n_diverged: usize,
}

/// Sweep results ordered by learning rate, then checkpoint.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn checkpoints(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.rows.iter().map(|r| r.checkpoint).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn lrs(&self) -> Vec<f64> {
        let mut l: Vec<f64> = self.rows.iter().map(|r| r.lr).collect();
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }

    /// Rows at `checkpoint`, by ascending learning rate.
    pub fn at_checkpoint(&self, checkpoint: usize) -> Vec<&SweepRow> {
        let mut rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.checkpoint == checkpoint).collect();
        rows.sort_by(|a, b| a.lr.total_cmp(&b.lr));
        rows
    }

    pub fn total_diverged(&self) -> usize {
        self.rows.iter().map(|r| r.n_diverged).sum()
    }
}

/// Mean and standard error; `+inf` for both if any sample is infinite.
fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if samples.iter().any(|s| !s.is_finite()) {
        return (f64::INFINITY, f64::INFINITY);
    }
    let mean = pairwise_sum(samples) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every `(lr, run)` cell with seed `mix_seed(base_seed, lr_index,
/// run_index)` and aggregates per checkpoint.
pub fn sweep_as<T: Real>(cfg: &ExperimentConfig) -> Result<SweepSummary, HarnessError> {
    let ctx = RunContext::<T>::from_config(cfg)?;
    let cells: Vec<(usize, usize)> =
        (0..cfg.lr_grid.len()).flat_map(|l| (0..cfg.n_runs).map(move |r| (l, r))).collect();
    let results: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(l, r)| ctx.run(cfg.lr_grid[l], mix_seed(cfg.base_seed, l as u64, r as u64)))
        .collect();
    let env_id = cfg.env.env_id();
    let m = cfg.effective_m();
    let mut rows = Vec::with_capacity(cfg.lr_grid.len() * cfg.checkpoints.len());
    let mut samples = vec![0.0; cfg.n_runs];
    for (l, &lr) in cfg.lr_grid.iter().enumerate() {
        let runs = &results[l * cfg.n_runs..(l + 1) * cfg.n_runs];
        for (c, &checkpoint) in cfg.checkpoints.iter().enumerate() {
            for (s, run) in samples.iter_mut().zip(runs) {
                *s = run[c];
            }
            let (mse_mean, mse_stderr) = mean_stderr(&samples);
            rows.push(SweepRow {
                env_id: env_id.clone(),
                agent: cfg.agent,
                m,
                lr,
                checkpoint,
                mse_mean,
                mse_stderr,
                n_runs: cfg.n_runs,
                n_diverged: samples.iter().filter(|s| !s.is_finite()).count(),
            });
        }
    }
    Ok(SweepSummary { rows })
}

/// [`sweep_as`] in `f64`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepSummary, HarnessError> {
    sweep_as::<f64>(cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimum {
    pub lr: f64,
    pub mse_mean: f64,
    pub mse_stderr: f64,
}

/// Learning rate with the smallest mean MSE at `checkpoint`; ties go to the
/// smaller learning rate.
pub fn optimal_mse(summary: &SweepSummary, checkpoint: usize) -> Result<Optimum, HarnessError> {
    let rows = summary.at_checkpoint(checkpoint);
    if rows.is_empty() {
        return Err(HarnessError::MissingCheckpoint(checkpoint));
    }
    let mut best: Option<&SweepRow> = None;
    for r in rows {
        if r.mse_mean.is_finite() && best.is_none_or(|b| r.mse_mean < b.mse_mean) {
            best = Some(r);
        }
    }
    best.map(|r| Optimum { lr: r.lr, mse_mean: r.mse_mean, mse_stderr: r.mse_stderr })
        .ok_or(HarnessError::AllInfinite { checkpoint })
}

/// Range of learning rates whose mean MSE lies within two standard errors
/// of the optimum.
fn near_optimal_band(summary: &SweepSummary, checkpoint: usize, best: &Optimum) -> (f64, f64) {
    let cutoff = best.mse_mean + 2.0 * best.mse_stderr;
    let lrs: Vec<f64> =
        summary.at_checkpoint(checkpoint).iter().filter(|r| r.mse_mean <= cutoff).map(|r| r.lr).collect();
    (lrs[0], lrs[lrs.len() - 1])
}

/// Comparison of two sweeps at one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementPoint {
    pub checkpoint: usize,
    /// Optimal MSE of `a` divided by optimal MSE of `b`; 1 when both are 0.
    pub ratio: f64,
    pub optimal_lr_a: f64,
    pub optimal_lr_b: f64,
    pub mse_a: f64,
    pub stderr_a: f64,
    pub mse_b: f64,
    pub stderr_b: f64,
    /// Smallest and largest near-optimal learning rate of `a`.
    pub lr_band_a: (f64, f64),
    pub lr_band_b: (f64, f64),
}

impl ImprovementPoint {
    /// Delta-method standard error of the ratio.
    pub fn ratio_stderr(&self) -> f64 {
        if self.mse_a == 0.0 || self.mse_b == 0.0 {
            return 0.0;
        }
        let ra = self.stderr_a / self.mse_a;
        let rb = self.stderr_b / self.mse_b;
        self.ratio * (ra * ra + rb * rb).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCurve {
    pub env_id: String,
    pub agent_a: AgentKind,
    pub m_a: usize,
    pub agent_b: AgentKind,
    pub m_b: usize,
    pub points: Vec<ImprovementPoint>,
}

impl ImprovementCurve {
    pub fn at(&self, checkpoint: usize) -> Option<&ImprovementPoint> {
        self.points.iter().find(|p| p.checkpoint == checkpoint)
    }
}

/// Compares two finished sweeps at every shared checkpoint.
pub fn improvement_from_summaries(a: &SweepSummary, b: &SweepSummary) -> Result<ImprovementCurve, HarnessError> {
    let (ra, rb) = match (a.rows.first(), b.rows.first()) {
        (Some(ra), Some(rb)) => (ra, rb),
        _ => return Err(HarnessError::Mismatch("empty summary".into())),
    };
    if ra.env_id != rb.env_id {
        return Err(HarnessError::Mismatch(format!("environments {} and {}", ra.env_id, rb.env_id)));
    }
    let checkpoints = a.checkpoints();
    if checkpoints != b.checkpoints() {
        return Err(HarnessError::Mismatch("checkpoint lists differ".into()));
    }
    let mut points = Vec::with_capacity(checkpoints.len());
    for c in checkpoints {
        let oa = optimal_mse(a, c)?;
        let ob = optimal_mse(b, c)?;
        let ratio = if oa.mse_mean == ob.mse_mean { 1.0 } else { oa.mse_mean / ob.mse_mean };
        points.push(ImprovementPoint {
            checkpoint: c,
            ratio,
            optimal_lr_a: oa.lr,
            optimal_lr_b: ob.lr,
            mse_a: oa.mse_mean,
            stderr_a: oa.mse_stderr,
            mse_b: ob.mse_mean,
            stderr_b: ob.mse_stderr,
            lr_band_a: near_optimal_band(a, c, &oa),
            lr_band_b: near_optimal_band(b, c, &ob),
        });
    }
    Ok(ImprovementCurve {
        env_id: ra.env_id.clone(),
        agent_a: ra.agent,
        m_a: ra.m,
        agent_b: rb.agent,
        m_b: rb.m,
        points,
    })
}

/// Sweeps both configurations and compares them (`a` relative to `b`).
pub fn improvement_curve(cfg_a: &ExperimentConfig, cfg_b: &ExperimentConfig) -> Result<ImprovementCurve, HarnessError> {
    if cfg_a.env != cfg_b.env {
        return Err(HarnessError::Mismatch("configurations use different environments".into()));
    }
    if cfg_a.checkpoints != cfg_b.checkpoints {
        return Err(HarnessError::Mismatch("configurations use different checkpoints".into()));
    }
    improvement_from_summaries(&sweep(cfg_a)?, &sweep(cfg_b)?)
}

/// Improvement curves for environments that differ from `cfg_a.env` only in
/// the Gaussian reward scale.
pub fn reward_scale_sweep(
    cfg_a: &ExperimentConfig,
    cfg_b: &ExperimentConfig,
    sigmas: &[f64],
) -> Result<Vec<(f64, ImprovementCurve)>, HarnessError> {
    if cfg_a.env.reward_kind != RewardKind::Gaussian {
        return Err(HarnessError::Invalid("reward-scale sweeps need Gaussian rewards".into()));
    }
    sigmas
        .iter()
        .map(|&sigma| {
            let mut a = cfg_a.clone();
            let mut b = cfg_b.clone();
            a.env.reward_scale = sigma;
            b.env.reward_scale = sigma;
            Ok((sigma, improvement_curve(&a, &b)?))
        })
        .collect()
}
