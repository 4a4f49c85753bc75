//! Shooting solver for the world configuration.
//!
//! Given `x_1`, the forward recursion
//! `x_{n+1}^2 = x_n^2 - 1/(x_n S_n)` produces `x_2, ..., x_N`. The pinned
//! world `x_{N+1} = 0` is the boundary condition, and it holds exactly when
//! `F(x_1) = x_N^3 S_N - 1 = 0`. [`solve_configuration`] brackets a sign
//! change of `F` and refines it with Brent's method.
//!
//! If `x_1` is too small the squared positions run out before `N` worlds
//! are produced ([`RecursionStatus::EarlyCollapse`]). The root search treats
//! that region as the negative side of `F`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::model::{boundary_residual_of, SolveMeta, WorldConfiguration};
use crate::sum::{two_prod, two_sum, NeumaierSum};

/// Accumulation strategy for the running sums `S_n`.
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PrecisionMode {
    /// Plain f64 arithmetic.
    #[default]
    Standard,
    /// Compensated `S_n` and error-free products in the recursion step.
    Extended,
}

impl PrecisionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrecisionMode::Standard => "standard",
            PrecisionMode::Extended => "extended",
        }
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecisionMode {
    type Err = UnknownPrecision;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(PrecisionMode::Standard),
            "extended" => Ok(PrecisionMode::Extended),
            _ => Err(UnknownPrecision),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownPrecision;

impl fmt::Display for UnknownPrecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("precision mode must be `standard` or `extended`")
    }
}

impl core::error::Error for UnknownPrecision {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Acceptance threshold on `|F(x_1)|`. `F` is already relative to 1.
    pub tolerance: f64,
    /// Cap on residual evaluations during refinement.
    pub max_iterations: usize,
    pub precision: PrecisionMode,
    /// Initial bracket for `x_1`. It is widened if it does not straddle the
    /// root.
    pub bracket_hint: Option<(f64, f64)>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 200,
            precision: PrecisionMode::Standard,
            bracket_hint: None,
        }
    }
}

impl SolverConfig {
    pub fn with_precision(mut self, precision: PrecisionMode) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(SolveError::InvalidConfig("tolerance must be positive and finite"));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::InvalidConfig("max_iterations must be at least 1"));
        }
        if let Some((lo, hi)) = self.bracket_hint {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(SolveError::InvalidConfig("bracket hint must satisfy 0 < lo < hi"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveError {
    ZeroWorlds,
    InvalidStart(f64),
    InvalidConfig(&'static str),
    /// No sign change of the boundary residual was found.
    BracketNotFound {
        lo: f64,
        hi: f64,
        expansions: usize,
    },
    /// The iteration cap was hit with `|F| > tol` and the bracket still wider
    /// than float resolution.
    MaxIterations {
        iterations: usize,
        x1: f64,
        residual: f64,
    },
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::ZeroWorlds => f.write_str("number of worlds must be at least 1"),
            SolveError::InvalidStart(x) => write!(f, "starting position x_1 = {x} must be positive and finite"),
            SolveError::InvalidConfig(msg) => write!(f, "invalid solver configuration: {msg}"),
            SolveError::BracketNotFound { lo, hi, expansions } => write!(
                f,
                "no sign change of the boundary residual in [{lo}, {hi}] after {expansions} expansions"
            ),
            SolveError::MaxIterations {
                iterations,
                x1,
                residual,
            } => write!(
                f,
                "no convergence after {iterations} iterations (x_1 = {x1}, residual = {residual:e})"
            ),
        }
    }
}

impl core::error::Error for SolveError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecursionStatus {
    /// All of `x_2 ... x_N` were produced.
    Complete,
    /// `x_{k+1}^2 <= 0` at step `k < N`.
    EarlyCollapse(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionOutcome {
    pub status: RecursionStatus,
    /// `x_1, x_2, ...` as far as the recursion got.
    pub positions: Vec<f64>,
    /// `S_n = sum_{i<=n} 1/x_i^2`, one per produced position.
    pub partial_sums: Vec<f64>,
}

impl RecursionOutcome {
    pub fn is_complete(&self) -> bool {
        self.status == RecursionStatus::Complete
    }
}

/// Running state of the recursion, in one of the two precision modes.
#[derive(Debug, Clone, Copy)]
struct Stepper {
    x: f64,
    sum: NeumaierSum,
    plain_sum: f64,
    precision: PrecisionMode,
}

impl Stepper {
    fn new(x1: f64, precision: PrecisionMode) -> Self {
        let s1 = 1.0 / (x1 * x1);
        let mut sum = NeumaierSum::new();
        sum.add(s1);
        Self {
            x: x1,
            sum,
            plain_sum: s1,
            precision,
        }
    }

    fn partial_sum(&self) -> f64 {
        match self.precision {
            PrecisionMode::Standard => self.plain_sum,
            PrecisionMode::Extended => self.sum.value(),
        }
    }

    /// Next squared position `x_{n+1}^2`.
    fn next_square(&self) -> f64 {
        let x = self.x;
        match self.precision {
            PrecisionMode::Standard => x * x - 1.0 / (x * self.plain_sum),
            PrecisionMode::Extended => {
                let (sq, sq_err) = two_prod(x, x);
                let (s_hi, s_lo) = self.sum.parts();
                let (q, q_err) = two_prod(x, s_hi);
                let q_tail = q_err + x * s_lo;
                let inv = 1.0 / q;
                let inv_tail = -inv * q_tail / q;
                let (d, d_err) = two_sum(sq, -inv);
                d + (d_err + sq_err - inv_tail)
            }
        }
    }

    /// Advances to `x_{n+1}`; `None` if the squared position is not positive.
    fn advance(&mut self) -> Option<f64> {
        let square = self.next_square();
        let inv_square = 1.0 / square;
        if !(square > 0.0) || !inv_square.is_finite() {
            return None;
        }
        self.x = libm::sqrt(square);
        self.plain_sum += inv_square;
        self.sum.add(inv_square);
        Some(self.x)
    }

    /// `x^3 S - 1`.
    fn boundary_residual(&self) -> f64 {
        let x = self.x;
        match self.precision {
            PrecisionMode::Standard => x * x * x * self.plain_sum - 1.0,
            PrecisionMode::Extended => {
                let (x2, x2_err) = two_prod(x, x);
                let (x3, x3_err) = two_prod(x2, x);
                let x3_tail = x3_err + x2_err * x;
                let (s_hi, s_lo) = self.sum.parts();
                let (p, p_err) = two_prod(x3, s_hi);
                let (d, d_err) = two_sum(p, -1.0);
                d + (d_err + p_err + x3 * s_lo + x3_tail * s_hi)
            }
        }
    }
}

fn check_start(x1: f64, n_worlds: usize) -> Result<(), SolveError> {
    if n_worlds == 0 {
        return Err(SolveError::ZeroWorlds);
    }
    if !(x1 > 0.0 && x1.is_finite()) {
        return Err(SolveError::InvalidStart(x1));
    }
    Ok(())
}

/// Runs the recursion from `x1` in standard precision.
pub fn forward_recursion(x1: f64, n_worlds: usize) -> Result<RecursionOutcome, SolveError> {
    forward_recursion_with(x1, n_worlds, PrecisionMode::Standard)
}

/// Runs the recursion from `x1`, applying it at most `N - 1` times.
pub fn forward_recursion_with(
    x1: f64,
    n_worlds: usize,
    precision: PrecisionMode,
) -> Result<RecursionOutcome, SolveError> {
    check_start(x1, n_worlds)?;
    let mut stepper = Stepper::new(x1, precision);
    let mut positions = Vec::with_capacity(n_worlds);
    let mut partial_sums = Vec::with_capacity(n_worlds);
    positions.push(x1);
    partial_sums.push(stepper.partial_sum());
    for k in 1..n_worlds {
        match stepper.advance() {
            Some(x) => {
                positions.push(x);
                partial_sums.push(stepper.partial_sum());
            }
            None => {
                return Ok(RecursionOutcome {
                    status: RecursionStatus::EarlyCollapse(k),
                    positions,
                    partial_sums,
                })
            }
        }
    }
    Ok(RecursionOutcome {
        status: RecursionStatus::Complete,
        positions,
        partial_sums,
    })
}

/// Value of the boundary equation at a trial `x_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual {
    /// `F(x_1) = x_N^3 S_N - 1`.
    Value(f64),
    /// The recursion died at step `k` before producing `x_N`. Counts as the
    /// negative side of `F` ("`x_1` too small").
    Collapsed { step: usize },
}

impl Residual {
    pub fn is_positive(&self) -> bool {
        matches!(self, Residual::Value(v) if *v > 0.0)
    }

    pub fn is_negative_side(&self) -> bool {
        match self {
            Residual::Value(v) => *v < 0.0,
            Residual::Collapsed { .. } => true,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Residual::Value(v) => Some(*v),
            Residual::Collapsed { .. } => None,
        }
    }

    /// Collapse mapped to `-inf`, which keeps the sign and never looks like
    /// the best iterate.
    fn as_signed(&self) -> f64 {
        match self {
            Residual::Value(v) => *v,
            Residual::Collapsed { .. } => f64::NEG_INFINITY,
        }
    }
}

pub fn boundary_residual(x1: f64, n_worlds: usize) -> Result<Residual, SolveError> {
    boundary_residual_with(x1, n_worlds, PrecisionMode::Standard)
}

/// `F(x_1)` without storing the trajectory.
pub fn boundary_residual_with(x1: f64, n_worlds: usize, precision: PrecisionMode) -> Result<Residual, SolveError> {
    check_start(x1, n_worlds)?;
    let mut stepper = Stepper::new(x1, precision);
    for k in 1..n_worlds {
        if stepper.advance().is_none() {
            return Ok(Residual::Collapsed { step: k });
        }
    }
    Ok(Residual::Value(stepper.boundary_residual()))
}

const MAX_EXPANSIONS: usize = 64;
const SCAN_POINTS: usize = 16;

/// Finds the world configuration for `n_worlds` half-line worlds.
pub fn solve_configuration(n_worlds: usize, config: &SolverConfig) -> Result<WorldConfiguration, SolveError> {
    if n_worlds == 0 {
        return Err(SolveError::ZeroWorlds);
    }
    config.validate()?;
    let precision = config.precision;
    let eval = |x: f64| boundary_residual_with(x, n_worlds, precision).map(|r| r.as_signed());

    // x_1 >= x_N and x_N <= N^{-1/3}, so the root cannot sit below that for
    // any N we can reach; the upper end grows roughly like ln N.
    let n = n_worlds as f64;
    let (mut lo, mut hi) = config
        .bracket_hint
        .unwrap_or((libm::pow(n, -1.0 / 3.0), 1.0 + libm::log(n)));
    let mut f_lo = eval(lo)?;
    let mut f_hi = eval(hi)?;

    let mut expansions = 0;
    while f_lo > 0.0 {
        if expansions == MAX_EXPANSIONS {
            return Err(SolveError::BracketNotFound { lo, hi, expansions });
        }
        hi = lo;
        f_hi = f_lo;
        lo *= 0.5;
        f_lo = eval(lo)?;
        expansions += 1;
    }
    while f_hi < 0.0 {
        if expansions == MAX_EXPANSIONS {
            return Err(SolveError::BracketNotFound { lo, hi, expansions });
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = eval(hi)?;
        expansions += 1;
    }

    // Coarse geometric scan: counts sign changes and narrows the bracket to
    // the first one.
    let mut sign_changes = 0;
    let mut first: Option<(f64, f64, f64, f64)> = None;
    let ratio = libm::pow(hi / lo, 1.0 / SCAN_POINTS as f64);
    let (mut prev_x, mut prev_f) = (lo, f_lo);
    for k in 1..=SCAN_POINTS {
        let (x, fx) = if k == SCAN_POINTS {
            (hi, f_hi)
        } else {
            let x = lo * libm::pow(ratio, k as f64);
            (x, eval(x)?)
        };
        if (prev_f < 0.0) != (fx < 0.0) || fx == 0.0 {
            sign_changes += 1;
            if first.is_none() {
                first = Some((prev_x, prev_f, x, fx));
            }
        }
        prev_x = x;
        prev_f = fx;
    }
    if let Some((a, fa, b, fb)) = first {
        lo = a;
        f_lo = fa;
        hi = b;
        f_hi = fb;
    }

    let root = brent(eval, lo, f_lo, hi, f_hi, config)?;

    let outcome = forward_recursion_with(root.x, n_worlds, precision)?;
    debug_assert!(outcome.is_complete());
    let meta = SolveMeta {
        iterations: root.iterations,
        bracket: root.bracket,
        precision,
        resolution_limited: root.resolution_limited,
        sign_changes,
    };
    Ok(WorldConfiguration::solved(outcome.positions, root.residual, meta))
}

struct Root {
    x: f64,
    residual: f64,
    iterations: usize,
    bracket: (f64, f64),
    resolution_limited: bool,
}

/// Brent's method on a bracket with `f(lo) <= 0 <= f(hi)`. Collapsed
/// evaluations arrive as `-inf`; interpolation is only attempted when all
/// three points carry finite residuals, otherwise the step is a bisection.
fn brent<F>(mut eval: F, lo: f64, f_lo: f64, hi: f64, f_hi: f64, config: &SolverConfig) -> Result<Root, SolveError>
where
    F: FnMut(f64) -> Result<f64, SolveError>,
{
    let tol = config.tolerance;
    let (mut a, mut fa) = (lo, f_lo);
    let (mut b, mut fb) = (hi, f_hi);
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;

    let done = |b: f64, fb: f64, c: f64, iterations: usize, resolution_limited: bool| Root {
        x: b,
        residual: fb,
        iterations,
        bracket: if b < c { (b, c) } else { (c, b) },
        resolution_limited,
    };

    if fa == 0.0 {
        return Ok(done(a, fa, a, 0, false));
    }

    for iteration in 0..config.max_iterations {
        if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if libm::fabs(fc) < libm::fabs(fb) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        if libm::fabs(fb) <= tol {
            return Ok(done(b, fb, c, iteration, false));
        }
        let tol1 = 2.0 * f64::EPSILON * libm::fabs(b);
        let xm = 0.5 * (c - b);
        if libm::fabs(xm) <= tol1 {
            return Ok(done(b, fb, c, iteration, true));
        }

        let finite = fa.is_finite() && fb.is_finite() && fc.is_finite();
        if finite && libm::fabs(e) >= tol1 && libm::fabs(fa) > libm::fabs(fb) {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = libm::fabs(p);
            let min1 = 3.0 * xm * q - libm::fabs(tol1 * q);
            let min2 = libm::fabs(e * q);
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if libm::fabs(d) > tol1 {
            d
        } else {
            libm::copysign(tol1, xm)
        };
        fb = eval(b)?;
    }
    Err(SolveError::MaxIterations {
        iterations: config.max_iterations,
        x1: b,
        residual: fb,
    })
}

/// `|sum 1/x_n - N| / N`.
pub fn condition2_residual(positions: &[f64]) -> f64 {
    let n = positions.len() as f64;
    let sum: NeumaierSum = positions.iter().map(|x| 1.0 / x).collect();
    libm::fabs(sum.value() - n) / n
}

#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckKind {
    /// `x_n > x_{n+1}`; measured is the smallest gap.
    Ordering,
    /// `x_N > 0`; measured is the smallest position.
    Positivity,
    /// `|sum 1/x_n - N| / N <= tol`.
    Condition2,
    /// `|x_N^3 sum 1/x_i^2 - 1| <= tol`, recomputed from the positions.
    BoundaryResidual,
    /// `x_N >= 1/sqrt(N)`.
    LowerBound,
    /// `x_N <= N^{-1/3}`.
    UpperBound,
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Ordering => "ordering",
            CheckKind::Positivity => "positivity",
            CheckKind::Condition2 => "condition2",
            CheckKind::BoundaryResidual => "boundary_residual",
            CheckKind::LowerBound => "xn_lower_bound",
            CheckKind::UpperBound => "xn_upper_bound",
        }
    }
}

#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub kind: CheckKind,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
}

#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n_worlds: usize,
    pub tolerance: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, kind: CheckKind) -> Option<&Check> {
        self.checks.iter().find(|c| c.kind == kind)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Checks ordering, positivity, both equality conditions and the `x_N`
/// bounds. Failures are reported, never returned as errors.
pub fn validate_configuration(cfg: &WorldConfiguration, tol: f64) -> ValidationReport {
    let xs = cfg.positions();
    let n = xs.len() as f64;
    let last = cfg.x_last();
    let mut checks = Vec::with_capacity(6);

    let min_gap = xs.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    checks.push(Check {
        kind: CheckKind::Ordering,
        passed: min_gap > 0.0,
        measured: min_gap,
        limit: 0.0,
    });

    let min_pos = xs.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check {
        kind: CheckKind::Positivity,
        passed: min_pos > 0.0,
        measured: min_pos,
        limit: 0.0,
    });

    let c2 = condition2_residual(xs);
    checks.push(Check {
        kind: CheckKind::Condition2,
        passed: c2 <= tol,
        measured: c2,
        limit: tol,
    });

    let residual = libm::fabs(boundary_residual_of(xs));
    checks.push(Check {
        kind: CheckKind::BoundaryResidual,
        passed: residual <= tol,
        measured: residual,
        limit: tol,
    });

    let lower = 1.0 / libm::sqrt(n);
    checks.push(Check {
        kind: CheckKind::LowerBound,
        passed: last >= lower * (1.0 - tol),
        measured: last,
        limit: lower,
    });

    let upper = libm::pow(n, -1.0 / 3.0);
    checks.push(Check {
        kind: CheckKind::UpperBound,
        passed: last <= upper * (1.0 + tol),
        measured: last,
        limit: upper,
    });

    ValidationReport {
        n_worlds: xs.len(),
        tolerance: tol,
        checks,
    }
}
