//! Physical model: units, the exact first-excited-state density, and the
//! world configuration type.
//!
//! Conventions: [`TargetDensity`] is the full-line density (total mass 1).
//! All solver work happens on the half-line `x >= 0`, which carries mass
//! 1/2; full-line results are produced by mirroring.

use alloc::vec::Vec;
use core::fmt;

use crate::solver::PrecisionMode;
use crate::sum::NeumaierSum;

/// Dimensionless units with `m = e = hbar = 1`, so that `m e^2 / hbar^2 = 1`
/// and the energy scale `m e^4 / hbar^2` is 1.
///
/// Units are fixed; nothing downstream is configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DimensionlessUnits;

impl DimensionlessUnits {
    pub const MASS: f64 = 1.0;
    pub const CHARGE: f64 = 1.0;
    pub const HBAR: f64 = 1.0;

    /// `m e^2 / hbar^2`, the inverse length scale.
    pub const fn inverse_length_scale() -> f64 {
        Self::MASS * Self::CHARGE * Self::CHARGE / (Self::HBAR * Self::HBAR)
    }

    /// `m e^4 / hbar^2`, the energy scale.
    pub const fn energy_scale() -> f64 {
        Self::MASS * Self::CHARGE * Self::CHARGE * Self::CHARGE * Self::CHARGE / (Self::HBAR * Self::HBAR)
    }
}

/// Mass of the target density on `[0, inf)`.
pub const HALF_LINE_MASS: f64 = 0.5;

/// The exact density `P(x) = |psi_1(x)|^2 = 2 x^2 e^{-2|x|}` of the first
/// excited state of the 1D Coulomb potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TargetDensity;

impl TargetDensity {
    /// Normalization `B_1` of the wavefunction `psi_1(x) = B_1 x e^{-|x|}`.
    pub const NORMALIZATION: f64 = core::f64::consts::SQRT_2;

    pub fn density(&self, x: f64) -> f64 {
        target_density(x)
    }

    /// Wavefunction amplitude `psi_1(x) = sqrt(2) x e^{-|x|}`.
    pub fn amplitude(&self, x: f64) -> f64 {
        Self::NORMALIZATION * x * libm::exp(-libm::fabs(x))
    }

    /// Weight `b(x) = 2 x^2` in `P(x) = b(x) e^{-2|x|}`.
    pub fn weight(&self, x: f64) -> f64 {
        2.0 * x * x
    }

    pub fn mass(&self, lo: f64, hi: Endpoint) -> Result<f64, MassError> {
        target_mass(lo, hi)
    }

    /// Half-line density restricted to `x >= 0`; zero for negative `x`.
    pub fn half_line_density(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            target_density(x)
        }
    }
}

/// `P(x) = 2 x^2 e^{-2|x|}`. Total; even; zero at the origin.
pub fn target_density(x: f64) -> f64 {
    2.0 * x * x * libm::exp(-2.0 * libm::fabs(x))
}

/// Upper integration limit for [`target_mass`]. Infinity is a distinct
/// variant so the antiderivative limit is taken exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Finite(f64),
    Infinity,
}

impl From<f64> for Endpoint {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            Endpoint::Infinity
        } else {
            Endpoint::Finite(x)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassError {
    NegativeLower(f64),
    Reversed { lo: f64, hi: f64 },
    NotFinite,
}

impl fmt::Display for MassError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MassError::NegativeLower(lo) => write!(f, "lower limit {lo} is negative"),
            MassError::Reversed { lo, hi } => write!(f, "lower limit {lo} exceeds upper limit {hi}"),
            MassError::NotFinite => f.write_str("integration limits must be finite or +infinity"),
        }
    }
}

impl core::error::Error for MassError {}

/// `-e^{-2x} (x^2 + x + 1/2)`, an antiderivative of `2 x^2 e^{-2x}`.
fn antiderivative(x: f64) -> f64 {
    -libm::exp(-2.0 * x) * (x * x + x + 0.5)
}

/// `int_lo^hi P(x) dx` for `0 <= lo <= hi`, from the closed-form
/// antiderivative.
pub fn target_mass(lo: f64, hi: Endpoint) -> Result<f64, MassError> {
    if !lo.is_finite() {
        return Err(MassError::NotFinite);
    }
    if lo < 0.0 {
        return Err(MassError::NegativeLower(lo));
    }
    let upper = match hi {
        Endpoint::Infinity => 0.0,
        Endpoint::Finite(hi) => {
            if hi.is_nan() || hi == f64::NEG_INFINITY {
                return Err(MassError::NotFinite);
            }
            if hi < lo {
                return Err(MassError::Reversed { lo, hi });
            }
            if hi == f64::INFINITY {
                0.0
            } else {
                antiderivative(hi)
            }
        }
    };
    Ok(upper - antiderivative(lo))
}

/// Bookkeeping from the root search that produced a configuration.
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveMeta {
    /// Residual evaluations spent in the refinement phase.
    pub iterations: usize,
    /// Final bracket `[lo, hi]` around the accepted `x_1`.
    pub bracket: (f64, f64),
    pub precision: PrecisionMode,
    /// The bracket shrank to adjacent floats before `|F| <= tol` was met;
    /// the residual reported is the best attainable in f64.
    pub resolution_limited: bool,
    /// Sign changes seen on the coarse scan of the bracket. More than one
    /// would indicate several roots.
    pub sign_changes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfigError {
    Empty,
    NotFinite { index: usize, value: f64 },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Empty => f.write_str("configuration has no worlds"),
            ConfigError::NotFinite { index, value } => {
                write!(f, "position x_{} = {value} is not finite", index + 1)
            }
        }
    }
}

impl core::error::Error for ConfigError {}

/// Half-line world positions `x_1 > ... > x_N > 0`, with the implicit
/// pinned world `x_{N+1} = 0` and `x_0 = inf`.
///
/// Ordering and positivity are not enforced on construction so that
/// externally supplied or perturbed configurations can be checked with
/// [`crate::solver::validate_configuration`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfiguration {
    positions: Vec<f64>,
    boundary_residual: f64,
    meta: Option<SolveMeta>,
}

impl WorldConfiguration {
    /// Wraps externally supplied positions. The boundary residual is
    /// recomputed from the positions.
    pub fn from_positions(positions: Vec<f64>) -> Result<Self, ConfigError> {
        if positions.is_empty() {
            return Err(ConfigError::Empty);
        }
        if let Some((index, &value)) = positions.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ConfigError::NotFinite { index, value });
        }
        let boundary_residual = boundary_residual_of(&positions);
        Ok(Self {
            positions,
            boundary_residual,
            meta: None,
        })
    }

    /// Attaches root-search bookkeeping, e.g. after reading a stored
    /// configuration back.
    pub fn with_meta(mut self, meta: SolveMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub(crate) fn solved(positions: Vec<f64>, boundary_residual: f64, meta: SolveMeta) -> Self {
        Self {
            positions,
            boundary_residual,
            meta: Some(meta),
        }
    }

    /// Half-line world count `N`. The full symmetric system has `2N + 1`
    /// worlds.
    pub fn n_worlds(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn x1(&self) -> f64 {
        self.positions[0]
    }

    pub fn x_last(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }

    /// `x_N^3 S_N - 1` at the accepted solution, or recomputed from the
    /// positions for external configurations.
    pub fn boundary_residual(&self) -> f64 {
        self.boundary_residual
    }

    pub fn solve_meta(&self) -> Option<&SolveMeta> {
        self.meta.as_ref()
    }

    /// Position `x_k` for `k` in `0..=N+1`, with `x_0 = inf` and
    /// `x_{N+1} = 0`.
    pub fn extended(&self, k: usize) -> f64 {
        match k {
            0 => f64::INFINITY,
            k if k == self.positions.len() + 1 => 0.0,
            k => self.positions[k - 1],
        }
    }

    /// Mirrored full-line positions in increasing order:
    /// `-x_1, ..., -x_N, 0, x_N, ..., x_1` (`2N + 1` worlds).
    pub fn full_line(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.positions.len() + 1);
        out.extend(self.positions.iter().map(|x| -x));
        out.push(0.0);
        out.extend(self.positions.iter().rev().copied());
        out
    }
}

/// `x_N^3 sum 1/x_i^2 - 1` straight from a list of positions.
pub(crate) fn boundary_residual_of(positions: &[f64]) -> f64 {
    let sum: NeumaierSum = positions.iter().map(|x| 1.0 / (x * x)).collect();
    let last = positions[positions.len() - 1];
    last * last * last * sum.value() - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_node_and_symmetry() {
        assert_eq!(target_density(0.0), 0.0);
        assert_eq!(target_density(-1.0), target_density(1.0));
        assert_eq!(target_density(-3.7), target_density(3.7));
    }

    #[test]
    fn density_at_one() {
        // 2 e^{-2}, with e^{-2} from its power series as an independent path.
        let mut term = 1.0f64;
        let mut e_minus_two = 1.0f64;
        for k in 1..40 {
            term *= -2.0 / k as f64;
            e_minus_two += term;
        }
        let expected = 2.0 * e_minus_two;
        assert!((target_density(1.0) - expected).abs() < 1e-15);
        assert!((target_density(1.0) - 0.270_670_566_473_225_4).abs() < 1e-15);
    }

    #[test]
    fn density_is_squared_amplitude() {
        let t = TargetDensity;
        for &x in &[-2.5, -0.3, 0.0, 0.7, 1.0, 4.0] {
            let a = t.amplitude(x);
            assert!((a * a - t.density(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_matches_density_form() {
        let t = TargetDensity;
        for &x in &[-1.5, 0.25, 2.0] {
            let rebuilt = t.weight(x) * libm::exp(-2.0 * libm::fabs(x));
            assert!((rebuilt - t.density(x)).abs() < 1e-16);
        }
    }

    #[test]
    fn half_line_mass_is_one_half() {
        assert_eq!(target_mass(0.0, Endpoint::Infinity).unwrap(), 0.5);
        assert_eq!(target_mass(0.0, Endpoint::Finite(0.0)).unwrap(), 0.0);
        assert_eq!(target_mass(0.0, Endpoint::from(f64::INFINITY)).unwrap(), 0.5);
    }

    #[test]
    fn mass_zero_to_one() {
        // 1/2 - (5/2) e^{-2}, cross-checked at 50 digits.
        let m = target_mass(0.0, Endpoint::Finite(1.0)).unwrap();
        assert!((m - 0.161_661_791_908_468_27).abs() < 1e-15);
    }

    #[test]
    fn mass_rejects_bad_limits() {
        assert_eq!(
            target_mass(-1.0, Endpoint::Infinity),
            Err(MassError::NegativeLower(-1.0))
        );
        assert_eq!(
            target_mass(2.0, Endpoint::Finite(1.0)),
            Err(MassError::Reversed { lo: 2.0, hi: 1.0 })
        );
        assert_eq!(target_mass(f64::NAN, Endpoint::Infinity), Err(MassError::NotFinite));
        assert_eq!(target_mass(0.0, Endpoint::Finite(f64::NAN)), Err(MassError::NotFinite));
    }

    #[test]
    fn configuration_rejects_empty_and_nan() {
        assert_eq!(WorldConfiguration::from_positions(Vec::new()), Err(ConfigError::Empty));
        assert!(matches!(
            WorldConfiguration::from_positions(alloc::vec![1.0, f64::NAN]),
            Err(ConfigError::NotFinite { index: 1, .. })
        ));
    }

    #[test]
    fn extended_positions() {
        let cfg = WorldConfiguration::from_positions(alloc::vec![2.0, 1.0]).unwrap();
        assert_eq!(cfg.extended(0), f64::INFINITY);
        assert_eq!(cfg.extended(1), 2.0);
        assert_eq!(cfg.extended(2), 1.0);
        assert_eq!(cfg.extended(3), 0.0);
        assert_eq!(cfg.full_line(), alloc::vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn external_residual_for_single_world() {
        let cfg = WorldConfiguration::from_positions(alloc::vec![1.0]).unwrap();
        assert_eq!(cfg.boundary_residual(), 0.0);
        assert!(cfg.solve_meta().is_none());
    }

    #[test]
    fn units_are_unit() {
        assert_eq!(DimensionlessUnits::inverse_length_scale(), 1.0);
        assert_eq!(DimensionlessUnits::energy_scale(), 1.0);
    }
}
