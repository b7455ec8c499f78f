//! One-dimensional reward distributions with exact CDF, quantile and mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::rng::RngStream;
use crate::scalar::{cast, to_f64, Real};

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum RewardError {
    #[error("quantile level {0} outside (0, 1)")]
    LevelOutOfRange(f64),
    #[error("reward scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("unknown reward kind `{0}` (expected pointmass, gaussian, exponential or student_t2)")]
    UnknownKind(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    PointMass,
    Gaussian,
    /// Exponential with rate 1, shifted to the configured mean.
    Exponential,
    /// Student-t with two degrees of freedom, shifted to the configured mean.
    StudentT2,
}

impl RewardKind {
    pub const ALL: [RewardKind; 4] = [
        RewardKind::PointMass,
        RewardKind::Gaussian,
        RewardKind::Exponential,
        RewardKind::StudentT2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::PointMass => "pointmass",
            RewardKind::Gaussian => "gaussian",
            RewardKind::Exponential => "exponential",
            RewardKind::StudentT2 => "student_t2",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardKind {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pointmass" | "point_mass" | "deterministic" => Ok(RewardKind::PointMass),
            "gaussian" | "normal" => Ok(RewardKind::Gaussian),
            "exponential" | "exp" => Ok(RewardKind::Exponential),
            "student_t2" | "t2" | "studentt2" => Ok(RewardKind::StudentT2),
            _ => Err(RewardError::UnknownKind(s.to_string())),
        }
    }
}

/// A reward distribution. `scale` is the Gaussian standard deviation and is
/// ignored by the other families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardModel<T> {
    kind: RewardKind,
    mean: T,
    scale: T,
}

/// Serialized form `{kind, mean, scale}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub kind: RewardKind,
    pub mean: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl<T: Real> RewardModel<T> {
    pub fn new(kind: RewardKind, mean: T, scale: T) -> Result<Self, RewardError> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(RewardError::BadScale(to_f64(scale)));
        }
        Ok(RewardModel { kind, mean, scale })
    }

    pub fn point_mass(mean: T) -> Self {
        RewardModel { kind: RewardKind::PointMass, mean, scale: T::one() }
    }

    pub fn gaussian(mean: T, sigma: T) -> Result<Self, RewardError> {
        Self::new(RewardKind::Gaussian, mean, sigma)
    }

    pub fn exponential(mean: T) -> Self {
        RewardModel { kind: RewardKind::Exponential, mean, scale: T::one() }
    }

    pub fn student_t2(mean: T) -> Self {
        RewardModel { kind: RewardKind::StudentT2, mean, scale: T::one() }
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// The configured mean (exact for every family).
    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn is_continuous(&self) -> bool {
        self.kind != RewardKind::PointMass
    }

    /// Smallest and largest points of the support, with infinities for
    /// unbounded families.
    pub fn support(&self) -> (T, T) {
        match self.kind {
            RewardKind::PointMass => (self.mean, self.mean),
            RewardKind::Exponential => (self.mean - T::one(), T::infinity()),
            RewardKind::Gaussian | RewardKind::StudentT2 => (T::neg_infinity(), T::infinity()),
        }
    }

    /// Sub-Gaussian variance proxy `σ` if the family is sub-Gaussian.
    pub fn sub_gaussian_sigma(&self) -> Option<T> {
        match self.kind {
            RewardKind::PointMass => Some(T::zero()),
            RewardKind::Gaussian => Some(self.scale),
            RewardKind::Exponential | RewardKind::StudentT2 => None,
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> T {
        match self.kind {
            RewardKind::PointMass => self.mean,
            RewardKind::Gaussian => self.mean + self.scale * cast::<T>(rng.standard_normal()),
            RewardKind::Exponential => {
                // inverse CDF with 1 - U in (0, 1]
                let u = rng.uniform();
                self.mean - T::one() - cast::<T>((-u).ln_1p())
            }
            RewardKind::StudentT2 => self.mean + cast::<T>(t2_quantile(rng.uniform_open())),
        }
    }

    /// `P(R <= z)`.
    pub fn cdf(&self, z: T) -> T {
        if z.is_nan() {
            return z;
        }
        match self.kind {
            RewardKind::PointMass => {
                if z >= self.mean {
                    T::one()
                } else {
                    T::zero()
                }
            }
            _ => self.continuous_cdf(z),
        }
    }

    /// `P(R < z)`, the left limit of the CDF.
    pub fn cdf_left(&self, z: T) -> T {
        match self.kind {
            RewardKind::PointMass => {
                if z > self.mean {
                    T::one()
                } else {
                    T::zero()
                }
            }
            _ => self.cdf(z),
        }
    }

    fn continuous_cdf(&self, z: T) -> T {
        let u = to_f64(z - self.mean);
        let p = match self.kind {
            RewardKind::Gaussian => 0.5 * erf::erfc(-u / (to_f64(self.scale) * SQRT_2)),
            RewardKind::Exponential => {
                let v = u + 1.0;
                if v <= 0.0 {
                    0.0
                } else {
                    -(-v).exp_m1()
                }
            }
            RewardKind::StudentT2 => t2_cdf(u),
            RewardKind::PointMass => unreachable!(),
        };
        cast(p)
    }

    /// Density; zero for the point mass.
    pub fn pdf(&self, z: T) -> T {
        let u = to_f64(z - self.mean);
        let d = match self.kind {
            RewardKind::PointMass => 0.0,
            RewardKind::Gaussian => {
                let s = to_f64(self.scale);
                let w = u / s;
                INV_SQRT_2PI / s * (-0.5 * w * w).exp()
            }
            RewardKind::Exponential => {
                let v = u + 1.0;
                if v < 0.0 {
                    0.0
                } else {
                    (-v).exp()
                }
            }
            RewardKind::StudentT2 => {
                let w = u * u + 2.0;
                1.0 / (w * w.sqrt())
            }
        };
        cast(d)
    }

    /// Left quantile `inf{z : F(z) >= p}` for `p` in `(0, 1)`.
    pub fn quantile(&self, p: T) -> Result<T, RewardError> {
        let pf = to_f64(p);
        if !(pf > 0.0 && pf < 1.0) {
            return Err(RewardError::LevelOutOfRange(pf));
        }
        let q = match self.kind {
            RewardKind::PointMass => return Ok(self.mean),
            RewardKind::Gaussian => to_f64(self.scale) * std_normal_quantile(pf),
            RewardKind::Exponential => -(-pf).ln_1p() - 1.0,
            RewardKind::StudentT2 => t2_quantile(pf),
        };
        Ok(self.mean + cast::<T>(q))
    }

    pub fn to_record(&self) -> RewardRecord {
        RewardRecord { kind: self.kind, mean: to_f64(self.mean), scale: to_f64(self.scale) }
    }

    pub fn from_record(rec: &RewardRecord) -> Result<Self, RewardError> {
        Self::new(rec.kind, cast(rec.mean), cast(rec.scale))
    }
}

/// CDF of the standard t-distribution with two degrees of freedom,
/// `(1 + t / sqrt(t^2 + 2)) / 2`, evaluated without cancellation in the
/// lower tail.
fn t2_cdf(t: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let s = (t * t + 2.0).sqrt();
    if t < 0.0 {
        1.0 / (s * (s - t))
    } else {
        0.5 * (1.0 + t / s)
    }
}

/// Standard normal quantile: the library inverse plus one Newton step,
/// which takes its ~1e-11 relative error down to rounding level.
fn std_normal_quantile(p: f64) -> f64 {
    let z = -SQRT_2 * erf::erfc_inv(2.0 * p);
    let resid = 0.5 * erf::erfc(-z / SQRT_2) - p;
    let dens = INV_SQRT_2PI * (-0.5 * z * z).exp();
    if dens > 0.0 {
        z - resid / dens
    } else {
        z
    }
}

/// Quantile of the standard t₂ distribution, `(2p - 1) / sqrt(2 p (1 - p))`.
fn t2_quantile(p: f64) -> f64 {
    (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_models() -> Vec<RewardModel<f64>> {
        vec![
            RewardModel::point_mass(0.3),
            RewardModel::gaussian(-0.4, 1.7).unwrap(),
            RewardModel::exponential(0.2),
            RewardModel::student_t2(1.1),
        ]
    }

    /// Test-only oracle: left quantile by bisection on the CDF.
    fn bisect_quantile(model: &RewardModel<f64>, p: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0e6, 1.0e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if model.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn point_mass_sample_is_the_mean() {
        let m = RewardModel::point_mass(2.5);
        let mut rng = RngStream::new(0);
        for _ in 0..10 {
            assert_eq!(m.sample(&mut rng), 2.5);
        }
    }

    #[test]
    fn gaussian_sample_mean_within_clt_bound() {
        let m = RewardModel::gaussian(0.0, 1.0).unwrap();
        let mut rng = RngStream::new(42);
        let n = 1_000_000;
        let mean = (0..n).map(|_| m.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 0.005, "{mean}");
    }

    #[test]
    fn exponential_draws_respect_support() {
        let m = RewardModel::exponential(0.0);
        let mut rng = RngStream::new(5);
        let min = (0..100_000).map(|_| m.sample(&mut rng)).fold(f64::INFINITY, f64::min);
        assert!(min >= -1.0);
    }

    #[test]
    fn cdf_examples() {
        let g = RewardModel::gaussian(0.0, 1.0).unwrap();
        assert_eq!(g.cdf(0.0), 0.5);
        let t = RewardModel::<f64>::student_t2(0.0);
        assert!((t.cdf(0.8165) - 0.75).abs() < 1e-5);
        let p = RewardModel::point_mass(1.0);
        assert_eq!(p.cdf(0.999), 0.0);
        assert_eq!(p.cdf(1.0), 1.0);
        assert_eq!(p.cdf_left(1.0), 0.0);
    }

    #[test]
    fn quantile_examples() {
        let g = RewardModel::<f64>::gaussian(3.0, 1.0).unwrap();
        assert!((g.quantile(0.5).unwrap() - 3.0).abs() < 1e-15);
        let t = RewardModel::student_t2(0.0);
        let expected = 0.5 / (2.0f64 * 0.75 * 0.25).sqrt();
        assert!((t.quantile(0.75).unwrap() - expected).abs() < 1e-9);
        assert!((t.quantile(0.75).unwrap() - 0.81650).abs() < 1e-5);
        let e = RewardModel::exponential(0.0);
        assert!(e.quantile(1.0 - (-1.0f64).exp()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn quantile_rejects_levels_outside_unit_interval() {
        let g = RewardModel::gaussian(0.0, 1.0).unwrap();
        assert!(g.quantile(0.0).is_err());
        assert!(g.quantile(1.0).is_err());
        assert!(g.quantile(f64::NAN).is_err());
        assert!(RewardModel::point_mass(1.0).quantile(1.5).is_err());
    }

    #[test]
    fn mean_is_configured_value() {
        assert_eq!(RewardModel::point_mass(-1.2).mean(), -1.2);
        assert_eq!(RewardModel::gaussian(0.7, 5.0).unwrap().mean(), 0.7);
        assert_eq!(RewardModel::student_t2(2.0).mean(), 2.0);
    }

    #[test]
    fn rejects_nonpositive_scale() {
        assert!(RewardModel::gaussian(0.0, 0.0).is_err());
        assert!(RewardModel::<f64>::new(RewardKind::Gaussian, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn round_trip_cdf_of_quantile() {
        let mut rng = RngStream::new(99);
        for _ in 0..1000 {
            let mean = 4.0 * rng.uniform() - 2.0;
            let scale = 0.1 + 3.0 * rng.uniform();
            let p = rng.uniform_open();
            for model in [
                RewardModel::gaussian(mean, scale).unwrap(),
                RewardModel::exponential(mean),
                RewardModel::student_t2(mean),
            ] {
                let q = model.quantile(p).unwrap();
                assert!((model.cdf(q) - p).abs() < 1e-10, "{model:?} p={p}");
            }
        }
    }

    #[test]
    fn closed_form_quantiles_match_bisection() {
        for model in all_models() {
            for k in 1..100 {
                let p = k as f64 / 100.0;
                let closed = model.quantile(p).unwrap();
                let numeric = bisect_quantile(&model, p);
                assert!((closed - numeric).abs() < 1e-9, "{model:?} p={p}: {closed} vs {numeric}");
            }
        }
    }

    #[test]
    fn quantile_and_cdf_galois_inequalities() {
        for model in all_models() {
            for k in 1..100 {
                let p = k as f64 / 100.0;
                let q = model.quantile(p).unwrap();
                assert!(model.cdf(q) >= p - 1e-12, "{model:?} p={p} cdf={}", model.cdf(q));
                let z = -3.0 + 0.06 * k as f64;
                let c = model.cdf(z);
                if c > 0.0 && c < 1.0 {
                    assert!(model.quantile(c).unwrap() <= z + 1e-9);
                }
            }
        }
    }

    #[test]
    fn cdf_is_monotone_with_correct_limits() {
        for model in all_models() {
            let mut prev = 0.0;
            for k in -400..=400 {
                let c = model.cdf(k as f64 * 0.05);
                assert!(c >= prev);
                prev = c;
            }
            assert_eq!(model.cdf(f64::NEG_INFINITY), 0.0);
            assert_eq!(model.cdf(f64::INFINITY), 1.0);
        }
    }

    #[test]
    fn t2_lower_tail_has_no_cancellation() {
        let t = RewardModel::<f64>::student_t2(0.0);
        let c = t.cdf(-1.0e8);
        // ~ 1 / (2 t^2)
        assert!((c * 2.0e16 - 1.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn pdf_integrates_to_cdf_increments() {
        for model in all_models().into_iter().filter(|m| m.is_continuous()) {
            let (a, b) = (-0.5, 0.7);
            let n = 20_000;
            let h = (b - a) / n as f64;
            let integral: f64 =
                (0..n).map(|k| model.pdf(a + (k as f64 + 0.5) * h)).sum::<f64>() * h;
            assert!((integral - (model.cdf(b) - model.cdf(a))).abs() < 1e-7, "{model:?}");
        }
    }

    /// One-sample Kolmogorov–Smirnov statistic against the 0.999 critical value.
    #[test]
    fn samples_agree_with_cdf() {
        let n = 100_000;
        let critical = 1.949 / (n as f64).sqrt();
        for (seed, model) in all_models().into_iter().filter(|m| m.is_continuous()).enumerate() {
            let mut rng = RngStream::new(1000 + seed as u64);
            let mut xs: Vec<f64> = (0..n).map(|_| model.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let d = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = model.cdf(x);
                    (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
                })
                .fold(0.0, f64::max);
            assert!(d < critical, "{model:?}: KS {d} >= {critical}");
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("Gaussian".parse::<RewardKind>().unwrap(), RewardKind::Gaussian);
        assert_eq!("t2".parse::<RewardKind>().unwrap(), RewardKind::StudentT2);
        assert!("cauchy".parse::<RewardKind>().is_err());
        for kind in RewardKind::ALL {
            assert_eq!(kind.name().parse::<RewardKind>().unwrap(), kind);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let g = RewardModel::<f32>::gaussian(1.0, 2.0).unwrap();
        assert!((g.quantile(0.5).unwrap() - 1.0).abs() < 1e-6);
        assert!((g.cdf(1.0) - 0.5).abs() < 1e-6);
    }
}
