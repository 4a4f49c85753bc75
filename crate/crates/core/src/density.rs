//! Empirical densities built from a world configuration, their masses and
//! distances to the target, and the continuous b-generalized zero-bias
//! transform used as an independent check on the discrete construction.
//!
//! The stepped density takes the value
//!
//! ```text
//! v_n = x_n / ((N + 1) (x_n^2 - x_{n+1}^2))
//! ```
//!
//! on `(x_{n+1}, x_n]`, with `x_{N+1} = 0`, and is zero beyond `x_1`. At a
//! solved configuration `v_n = x_n^2 S_n / (N + 1)`.
//!
//! The weighted construction uses `b(x) * sum_{i<=n} 1/b(x_i)` on
//! `(x_{n+1}, x_n]`; the sum runs over the worlds `x_1 ... x_n`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::model::{target_density, target_mass, Endpoint, TargetDensity, WorldConfiguration, HALF_LINE_MASS};
use crate::quadrature::{integrate_to_infinity, QuadratureConfig, QuadratureError};
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityError {
    /// `x_n <= x_{n+1}` (1-based `n`), including `x_N <= 0`.
    Degenerate {
        index: usize,
    },
    NonPositiveWeight {
        index: usize,
        value: f64,
    },
    UnknownMetric,
    Quadrature(QuadratureError),
    NonFiniteVariance(f64),
}

impl fmt::Display for DensityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityError::Degenerate { index } => write!(
                f,
                "zero or negative width interval between x_{} and x_{}",
                index + 1,
                index
            ),
            DensityError::NonPositiveWeight { index, value } => {
                write!(f, "weight b(x_{index}) = {value} is not positive")
            }
            DensityError::UnknownMetric => f.write_str("metric must be one of `l1`, `sup`, `mass-deficit`"),
            DensityError::Quadrature(e) => write!(f, "quadrature failed: {e}"),
            DensityError::NonFiniteVariance(v) => write!(f, "variance sigma^2 = {v} is not finite and positive"),
        }
    }
}

impl core::error::Error for DensityError {}

impl From<QuadratureError> for DensityError {
    fn from(e: QuadratureError) -> Self {
        DensityError::Quadrature(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extent {
    /// Defined on `x >= 0`, zero for negative `x`.
    #[default]
    HalfLine,
    /// Mirrored onto `x < 0`.
    FullLine,
}

/// Whether to add the `n = 0` interval `(x_1, x_0 = inf)` to the mass sum.
/// Its summand `x_0 / ((N + 1)(x_0 + x_1))` tends to `1/(N + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTerm {
    Exclude,
    Include,
}

/// Checks `x_1 > ... > x_N > 0` and returns the breakpoints with the pinned
/// world appended.
fn breakpoints_of(cfg: &WorldConfiguration) -> Result<Vec<f64>, DensityError> {
    let xs = cfg.positions();
    let mut out = Vec::with_capacity(xs.len() + 1);
    out.extend_from_slice(xs);
    out.push(0.0);
    if let Some(index) = out.windows(2).position(|w| !(w[0] > w[1])) {
        return Err(DensityError::Degenerate { index: index + 1 });
    }
    Ok(out)
}

/// Piecewise-constant empirical density on `(x_{n+1}, x_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDensity {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    extent: Extent,
}

impl StepDensity {
    pub fn n_worlds(&self) -> usize {
        self.values.len()
    }

    /// `x_1, ..., x_N, 0`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `v_1, ..., v_N`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    /// Same steps, reflected onto the negative half-line.
    pub fn mirrored(&self) -> Self {
        Self {
            extent: Extent::FullLine,
            ..self.clone()
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let x = match self.extent {
            Extent::HalfLine if x < 0.0 => return 0.0,
            Extent::HalfLine => x,
            Extent::FullLine => libm::fabs(x),
        };
        if x <= 0.0 {
            return 0.0;
        }
        let worlds = &self.breakpoints[..self.values.len()];
        match worlds.partition_point(|&b| b >= x) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }
}

pub fn build_step_density(cfg: &WorldConfiguration) -> Result<StepDensity, DensityError> {
    let breakpoints = breakpoints_of(cfg)?;
    let scale = (cfg.n_worlds() + 1) as f64;
    let values = breakpoints
        .windows(2)
        .map(|w| {
            let (hi, lo) = (w[0], w[1]);
            hi / (scale * (hi - lo) * (hi + lo))
        })
        .collect();
    Ok(StepDensity {
        breakpoints,
        values,
        extent: Extent::HalfLine,
    })
}

/// A weight function `b` on `(0, inf)`.
pub trait Weight {
    fn weight(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Weight for F {
    fn weight(&self, x: f64) -> f64 {
        self(x)
    }
}

/// `b(x) = scale * x^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticWeight {
    pub scale: f64,
}

impl QuadraticWeight {
    pub const UNIT: Self = Self { scale: 1.0 };
    /// The weight of the target density, `b(x) = 2 x^2`.
    pub const TARGET: Self = Self { scale: 2.0 };
}

impl Weight for QuadraticWeight {
    fn weight(&self, x: f64) -> f64 {
        self.scale * x * x
    }
}

/// `b(x) = 1`; the construction reduces to counting worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UnitWeight;

impl Weight for UnitWeight {
    fn weight(&self, _x: f64) -> f64 {
        1.0
    }
}

/// Density `b(x) * C_n / (N + 1)` on `(x_{n+1}, x_n]`, with
/// `C_n = sum_{i<=n} 1/b(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedStepDensity<W> {
    breakpoints: Vec<f64>,
    cumulative: Vec<f64>,
    weight: W,
    normalizer: f64,
}

impl<W: Weight> GeneralizedStepDensity<W> {
    pub fn n_worlds(&self) -> usize {
        self.cumulative.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `C_n = sum_{i<=n} 1/b(x_i)`, before normalization.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// The `1/(N + 1)` factor applied on evaluation.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn weight(&self) -> &W {
        &self.weight
    }

    /// Normalized density at `x`; zero outside `(0, x_1]`.
    pub fn evaluate(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let worlds = &self.breakpoints[..self.cumulative.len()];
        match worlds.partition_point(|&b| b >= x) {
            0 => 0.0,
            k => self.weight.weight(x) * self.cumulative[k - 1] * self.normalizer,
        }
    }

    /// Unnormalized value `b(x) C_n` at `x`.
    pub fn evaluate_unnormalized(&self, x: f64) -> f64 {
        self.evaluate(x) / self.normalizer
    }
}

pub fn build_generalized_density<W: Weight>(
    cfg: &WorldConfiguration,
    weight: W,
) -> Result<GeneralizedStepDensity<W>, DensityError> {
    let breakpoints = breakpoints_of(cfg)?;
    let mut acc = NeumaierSum::new();
    let mut cumulative = Vec::with_capacity(cfg.n_worlds());
    for (i, &x) in cfg.positions().iter().enumerate() {
        let b = weight.weight(x);
        if !(b > 0.0) || !b.is_finite() {
            return Err(DensityError::NonPositiveWeight { index: i + 1, value: b });
        }
        acc.add(1.0 / b);
        cumulative.push(acc.value());
    }
    Ok(GeneralizedStepDensity {
        breakpoints,
        cumulative,
        weight,
        normalizer: 1.0 / (cfg.n_worlds() + 1) as f64,
    })
}

/// `sum_{n=1}^N v_n (x_n - x_{n+1})`, plus `1/(N + 1)` for the `n = 0`
/// interval when requested.
pub fn empirical_mass(d: &StepDensity, boundary: BoundaryTerm) -> f64 {
    let mut acc: NeumaierSum = d
        .breakpoints
        .windows(2)
        .zip(&d.values)
        .map(|(w, v)| v * (w[0] - w[1]))
        .collect();
    if boundary == BoundaryTerm::Include {
        acc.add(1.0 / (d.n_worlds() + 1) as f64);
    }
    acc.value()
}

/// Closed-form integral of the `x^2`-weighted density,
///
/// ```text
/// 1/(3(N+1)) * sum_{n=0}^{N} [1 + x_{n+1}^2 / (x_n (x_n + x_{n+1}))]
/// ```
///
/// The `n = 0` summand involves `x_0 = inf` and is taken at its limit, 1.
pub fn empirical_integral(d: &StepDensity) -> f64 {
    let mut acc = NeumaierSum::new();
    acc.add(1.0);
    for w in d.breakpoints.windows(2) {
        let (hi, lo) = (w[0], w[1]);
        acc.add(1.0 + lo * lo / (hi * (hi + lo)));
    }
    acc.value() / (3.0 * (d.n_worlds() + 1) as f64)
}

#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// `int_0^{x_1} |P*_N - P| dx` plus the target mass beyond `x_1`.
    L1,
    /// Supremum of `|P*_N - P|` on the half-line.
    Sup,
    /// `|empirical mass - 1/2|`.
    MassDeficit,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::Sup => "sup",
            Metric::MassDeficit => "mass-deficit",
        }
    }
}

impl FromStr for Metric {
    type Err = DensityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "l1" | "L1" => Ok(Metric::L1),
            "sup" => Ok(Metric::Sup),
            "mass-deficit" => Ok(Metric::MassDeficit),
            _ => Err(DensityError::UnknownMetric),
        }
    }
}

/// Mode of the target density on the half-line.
const TARGET_MODE: f64 = 1.0;

fn mass_between(lo: f64, hi: f64) -> f64 {
    target_mass(lo, Endpoint::Finite(hi)).unwrap_or(0.0)
}

/// Point in `[lo, hi]` where the monotone `P` crosses `level`, if it does.
fn crossing(lo: f64, hi: f64, level: f64) -> Option<f64> {
    let (flo, fhi) = (target_density(lo) - level, target_density(hi) - level);
    if flo == 0.0 || fhi == 0.0 || (flo < 0.0) == (fhi < 0.0) {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (target_density(mid) - level < 0.0) == (flo < 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

/// `int_lo^hi |level - P(x)| dx`, exact up to root location.
fn abs_area(lo: f64, hi: f64, level: f64) -> f64 {
    let mut cuts: Vec<f64> = Vec::with_capacity(5);
    cuts.push(lo);
    if lo < TARGET_MODE && TARGET_MODE < hi {
        if let Some(c) = crossing(lo, TARGET_MODE, level) {
            cuts.push(c);
        }
        cuts.push(TARGET_MODE);
        if let Some(c) = crossing(TARGET_MODE, hi, level) {
            cuts.push(c);
        }
    } else if let Some(c) = crossing(lo, hi, level) {
        cuts.push(c);
    }
    cuts.push(hi);
    cuts.windows(2)
        .map(|w| libm::fabs(level * (w[1] - w[0]) - mass_between(w[0], w[1])))
        .sum()
}

/// Largest `|level - P(x)|` over `x` in `[lo, hi]`.
fn abs_sup(lo: f64, hi: f64, level: f64) -> f64 {
    let (mut p_min, mut p_max) = {
        let (a, b) = (target_density(lo), target_density(hi));
        (a.min(b), a.max(b))
    };
    if lo < TARGET_MODE && TARGET_MODE < hi {
        p_max = p_max.max(target_density(TARGET_MODE));
    }
    p_min = p_min.min(p_max);
    libm::fabs(level - p_min).max(libm::fabs(level - p_max))
}

/// Distance from the stepped density to the target on the half-line.
pub fn density_distance(d: &StepDensity, _target: &TargetDensity, metric: Metric) -> f64 {
    let x1 = d.breakpoints[0];
    match metric {
        Metric::MassDeficit => libm::fabs(empirical_mass(d, BoundaryTerm::Exclude) - HALF_LINE_MASS),
        Metric::L1 => {
            let mut acc: NeumaierSum = d
                .breakpoints
                .windows(2)
                .zip(&d.values)
                .map(|(w, &v)| abs_area(w[1], w[0], v))
                .collect();
            acc.add(target_mass(x1, Endpoint::Infinity).unwrap_or(0.0));
            acc.value()
        }
        Metric::Sup => {
            let inside = d
                .breakpoints
                .windows(2)
                .zip(&d.values)
                .map(|(w, &v)| abs_sup(w[1], w[0], v))
                .fold(0.0, f64::max);
            let tail = target_density(x1.max(TARGET_MODE));
            inside.max(tail)
        }
    }
}

/// Result of the continuous zero-bias transform on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroBiasTransform {
    /// `sigma^2 = E[W^2 / b(W)]`.
    pub sigma_squared: f64,
    pub values: Vec<f64>,
}

/// `sigma^2 = E[W^2/b(W)] = 2 int_0^inf w^2 p(w)/b(w) dw` for a symmetric
/// source density `p`.
pub fn zero_bias_variance<S, W>(source: &S, weight: &W, config: &QuadratureConfig) -> Result<f64, DensityError>
where
    S: Fn(f64) -> f64,
    W: Weight,
{
    let est = integrate_to_infinity(|w| w * w * source(w) / weight.weight(w), 0.0, config)?;
    let sigma_squared = 2.0 * est.value;
    if !(sigma_squared > 0.0 && sigma_squared.is_finite()) {
        return Err(DensityError::NonFiniteVariance(sigma_squared));
    }
    Ok(sigma_squared)
}

/// Transformed density at a single point `z`:
/// `(1/sigma^2) b(z) int_{|z|}^inf p(w)/b(w) dw`.
///
/// The expectation in the transform is restricted to the side of `z`; for a
/// symmetric source the two sides mirror each other.
pub fn zero_bias_density_at<S, W>(
    z: f64,
    source: &S,
    weight: &W,
    sigma_squared: f64,
    config: &QuadratureConfig,
) -> Result<f64, DensityError>
where
    S: Fn(f64) -> f64,
    W: Weight,
{
    let bz = weight.weight(z);
    if bz == 0.0 {
        return Ok(0.0);
    }
    let tail = integrate_to_infinity(|w| source(w) / weight.weight(w), libm::fabs(z), config)?;
    Ok(bz * tail.value / sigma_squared)
}

/// The b-generalized zero-bias transform of a symmetric density of the form
/// `b(x) e^{-2|x|}`, evaluated on `grid` by adaptive quadrature.
pub fn zero_bias_transform<S, W>(
    source: S,
    weight: W,
    grid: &[f64],
    config: &QuadratureConfig,
) -> Result<ZeroBiasTransform, DensityError>
where
    S: Fn(f64) -> f64,
    W: Weight,
{
    let sigma_squared = zero_bias_variance(&source, &weight, config)?;
    let values = grid
        .iter()
        .map(|&z| zero_bias_density_at(z, &source, &weight, sigma_squared, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ZeroBiasTransform { sigma_squared, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{forward_recursion, solve_configuration, SolverConfig};
    use alloc::vec;

    fn solved(n: usize) -> WorldConfiguration {
        solve_configuration(n, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn single_world_step() {
        let cfg = WorldConfiguration::from_positions(vec![1.0]).unwrap();
        let d = build_step_density(&cfg).unwrap();
        assert_eq!(d.values(), &[0.5]);
        assert_eq!(d.breakpoints(), &[1.0, 0.0]);
        assert_eq!(empirical_mass(&d, BoundaryTerm::Exclude), 0.5);
        assert_eq!(empirical_mass(&d, BoundaryTerm::Include), 1.0);
        // n = 0 limit (1) plus n = 1 term (1 + 0), over 3 * 2.
        assert!((empirical_integral(&d) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn step_evaluation_half_open() {
        let cfg = WorldConfiguration::from_positions(vec![2.0, 1.0]).unwrap();
        let d = build_step_density(&cfg).unwrap();
        let (v1, v2) = (d.values()[0], d.values()[1]);
        assert_eq!(v1, 2.0 / (3.0 * 3.0));
        assert_eq!(v2, 1.0 / 3.0);
        assert_eq!(d.evaluate(2.5), 0.0);
        assert_eq!(d.evaluate(2.0), v1);
        assert_eq!(d.evaluate(1.5), v1);
        assert_eq!(d.evaluate(1.0), v2);
        assert_eq!(d.evaluate(0.5), v2);
        assert_eq!(d.evaluate(0.0), 0.0);
        assert_eq!(d.evaluate(-0.5), 0.0);
        let full = d.mirrored();
        assert_eq!(full.extent(), Extent::FullLine);
        assert_eq!(full.evaluate(-0.5), v2);
        assert_eq!(full.evaluate(-1.5), v1);
    }

    #[test]
    fn degenerate_rejected() {
        let cfg = WorldConfiguration::from_positions(vec![1.0, 1.0]).unwrap();
        assert_eq!(build_step_density(&cfg), Err(DensityError::Degenerate { index: 1 }));
        let cfg = WorldConfiguration::from_positions(vec![1.0, -0.1]).unwrap();
        assert_eq!(build_step_density(&cfg), Err(DensityError::Degenerate { index: 2 }));
    }

    #[test]
    fn values_match_partial_sums() {
        for n in [2usize, 11, 21, 50] {
            let cfg = solved(n);
            let d = build_step_density(&cfg).unwrap();
            let sums = forward_recursion(cfg.x1(), n).unwrap().partial_sums;
            for (i, (&v, &s)) in d.values().iter().zip(&sums).enumerate() {
                let x = cfg.positions()[i];
                let via_sums = x * x * s / (n + 1) as f64;
                assert!(((v - via_sums) / v).abs() < 1e-12, "n = {n}, i = {i}");
            }
        }
    }

    #[test]
    fn generalized_single_world() {
        let cfg = WorldConfiguration::from_positions(vec![1.0]).unwrap();
        let g = build_generalized_density(&cfg, QuadraticWeight::UNIT).unwrap();
        assert_eq!(g.evaluate_unnormalized(1.0), 1.0);
        assert_eq!(g.evaluate(1.0), 0.5);
        assert!((g.evaluate(0.5) - 0.125).abs() < 1e-16);
        assert_eq!(g.evaluate(0.0), 0.0);
        assert_eq!(g.evaluate(1.5), 0.0);
    }

    #[test]
    fn generalized_unit_weight_counts() {
        let cfg = solved(5);
        let g = build_generalized_density(&cfg, UnitWeight).unwrap();
        for n in 1..=5 {
            let x = cfg.positions()[n - 1];
            assert_eq!(g.evaluate_unnormalized(x), n as f64);
        }
    }

    #[test]
    fn generalized_matches_step_at_worlds() {
        for n in 1..=50 {
            let cfg = solved(n);
            let d = build_step_density(&cfg).unwrap();
            let g = build_generalized_density(&cfg, |x: f64| x * x).unwrap();
            let g2 = build_generalized_density(&cfg, QuadraticWeight::TARGET).unwrap();
            for (i, &x) in cfg.positions().iter().enumerate() {
                let v = d.values()[i];
                assert!(((g.evaluate(x) - v) / v).abs() < 1e-12, "n = {n}, i = {i}");
                assert!(((g2.evaluate(x) - v) / v).abs() < 1e-12, "n = {n}, i = {i}");
            }
        }
    }

    #[test]
    fn generalized_rejects_bad_weight() {
        let cfg = WorldConfiguration::from_positions(vec![2.0, 1.0]).unwrap();
        let err = build_generalized_density(&cfg, |x: f64| x - 1.5).err().unwrap();
        assert_eq!(err, DensityError::NonPositiveWeight { index: 2, value: -0.5 });
    }

    #[test]
    fn distances_are_zero_free_and_sane() {
        let d = build_step_density(&solved(11)).unwrap();
        let t = TargetDensity;
        let deficit = density_distance(&d, &t, Metric::MassDeficit);
        assert!((deficit - 0.039_568_875_998_366_48).abs() < 1e-12);
        let l1 = density_distance(&d, &t, Metric::L1);
        assert!(l1 > deficit && l1 < 1.0);
        let sup = density_distance(&d, &t, Metric::Sup);
        assert!(sup > 0.0 && sup < 0.3);
    }

    #[test]
    fn l1_agrees_with_dense_sampling() {
        let d = build_step_density(&solved(21)).unwrap();
        let x1 = d.breakpoints()[0];
        let upper = 40.0;
        let steps = 400_000;
        let h = upper / steps as f64;
        let mut acc = 0.0;
        for k in 0..steps {
            let x = (k as f64 + 0.5) * h;
            acc += (d.evaluate(x) - target_density(x)).abs() * h;
        }
        let l1 = density_distance(&d, &TargetDensity, Metric::L1);
        assert!((l1 - acc).abs() < 1e-5, "{l1} vs {acc} (x1 = {x1})");
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("l1".parse::<Metric>(), Ok(Metric::L1));
        assert_eq!("sup".parse::<Metric>(), Ok(Metric::Sup));
        assert_eq!("mass-deficit".parse::<Metric>(), Ok(Metric::MassDeficit));
        assert_eq!("kl".parse::<Metric>(), Err(DensityError::UnknownMetric));
    }

    #[test]
    fn zero_bias_fixed_point_small_grid() {
        let grid = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, -1.0];
        let out = zero_bias_transform(
            target_density,
            QuadraticWeight::TARGET,
            &grid,
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert!((out.sigma_squared - 0.5).abs() < 1e-12);
        assert_eq!(out.values[0], 0.0);
        for (z, v) in grid.iter().zip(&out.values) {
            assert!((v - target_density(*z)).abs() < 1e-9, "z = {z}");
        }
        assert_eq!(out.values[3], out.values[6]);
    }
}
