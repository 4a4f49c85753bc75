//! Sweeps over the world count, convergence metrics, the `x_N` scaling fit,
//! the mass sandwich and the continuum-limit check of the difference
//! equation.

use std::time::Instant;

use miw_core::density::{
    build_step_density, density_distance, empirical_integral, empirical_mass, BoundaryTerm, DensityError, Metric,
};
use miw_core::energy::{average_hamiltonian, EnergyError};
use miw_core::model::{target_mass, ConfigError, Endpoint, TargetDensity, WorldConfiguration, HALF_LINE_MASS};
use miw_core::solver::{condition2_residual, solve_configuration, SolveError, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("sweep needs at least one world count")]
    EmptySweep,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("need at least {needed} distinct world counts (excluding N = 1), got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("log-log fit is degenerate (slope {slope})")]
    DegenerateFit { slope: f64 },
    #[error("N = {n} is too small for the interior check; need at least {min}")]
    TooFewWorlds { n: usize, min: usize },
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

/// Per-N convergence metrics. CSV columns follow the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub n_worlds: usize,
    pub x1: f64,
    pub x_n: f64,
    pub mass_no_boundary: f64,
    pub mass_with_boundary: f64,
    pub integral: f64,
    /// `mass_no_boundary - 1/2`.
    pub mass_deficit: f64,
    pub h_n: f64,
    pub u_n: f64,
    pub v_n: f64,
    pub condition2_residual: f64,
    pub boundary_residual: f64,
    /// Solve duration in seconds. Excluded from determinism checks.
    pub wall_time: f64,
}

impl ConvergenceRecord {
    /// Record for an already solved configuration.
    pub fn from_configuration(cfg: &WorldConfiguration, wall_time: f64) -> Result<Self, HarnessError> {
        let step = build_step_density(cfg)?;
        let energy = average_hamiltonian(cfg)?;
        let mass_no_boundary = empirical_mass(&step, BoundaryTerm::Exclude);
        Ok(Self {
            n_worlds: cfg.n_worlds(),
            x1: cfg.x1(),
            x_n: cfg.x_last(),
            mass_no_boundary,
            mass_with_boundary: empirical_mass(&step, BoundaryTerm::Include),
            integral: empirical_integral(&step),
            mass_deficit: mass_no_boundary - HALF_LINE_MASS,
            h_n: energy.h_n,
            u_n: energy.u_n,
            v_n: energy.v_n,
            condition2_residual: condition2_residual(cfg.positions()),
            boundary_residual: cfg.boundary_residual(),
            wall_time,
        })
    }

    /// Field-for-field equality ignoring `wall_time`.
    pub fn same_numbers(&self, other: &Self) -> bool {
        Self {
            wall_time: 0.0,
            ..self.clone()
        } == Self {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

/// One row of a sweep; failures stay in place instead of aborting.
#[derive(Debug)]
pub struct SweepEntry {
    pub n_worlds: usize,
    pub outcome: Result<ConvergenceRecord, HarnessError>,
}

/// Solves and records one world count.
pub fn run_one(n_worlds: usize, config: &SolverConfig) -> Result<ConvergenceRecord, HarnessError> {
    let start = Instant::now();
    let cfg = solve_configuration(n_worlds, config)?;
    let wall_time = start.elapsed().as_secs_f64();
    ConvergenceRecord::from_configuration(&cfg, wall_time)
}

/// Solves every requested `N` on up to `jobs` threads. Output is sorted by
/// `N` regardless of completion order.
pub fn sweep(n_values: &[usize], config: &SolverConfig, jobs: usize) -> Result<Vec<SweepEntry>, HarnessError> {
    if n_values.is_empty() {
        return Err(HarnessError::EmptySweep);
    }
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    let mut entries: Vec<SweepEntry> = pool.install(|| {
        n_values
            .par_iter()
            .map(|&n| SweepEntry {
                n_worlds: n,
                outcome: run_one(n, config),
            })
            .collect()
    });
    entries.sort_by_key(|e| e.n_worlds);
    Ok(entries)
}

/// Least-squares line through `(ln N, ln x_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `a` in `x_N ~ N^{-1/a}`.
    pub exponent_a: f64,
    pub slope: f64,
    pub intercept: f64,
    /// World counts that entered the fit.
    pub fit_range: Vec<usize>,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

/// Line fit `y = intercept + slope * x`, returning the RMS residual too.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

pub const MIN_FIT_POINTS: usize = 5;

/// Fits `x_N ~ N^{-1/a}`. `N = 1`, where both bounds on `x_N` are equal,
/// is left out.
pub fn fit_xn_scaling(records: &[ConvergenceRecord]) -> Result<ScalingFit, HarnessError> {
    let mut used: Vec<&ConvergenceRecord> = records.iter().filter(|r| r.n_worlds > 1).collect();
    used.sort_by_key(|r| r.n_worlds);
    used.dedup_by_key(|r| r.n_worlds);
    if used.len() < MIN_FIT_POINTS {
        return Err(HarnessError::InsufficientData {
            needed: MIN_FIT_POINTS,
            got: used.len(),
        });
    }
    let points: Vec<(f64, f64)> = used.iter().map(|r| ((r.n_worlds as f64).ln(), r.x_n.ln())).collect();
    let (slope, intercept, residual) = least_squares(&points);
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(HarnessError::DegenerateFit { slope });
    }
    Ok(ScalingFit {
        exponent_a: -1.0 / slope,
        slope,
        intercept,
        fit_range: used.iter().map(|r| r.n_worlds).collect(),
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SandwichViolation {
    /// Mass with the boundary term fell below 1/2.
    LowerBound { n_worlds: usize, mass_with_boundary: f64 },
    /// The integral exceeded 1/2.
    UpperBound { n_worlds: usize, integral: f64 },
    /// `|mass - 1/2|` grew from one N to the next.
    NonMonotoneDeficit {
        from: usize,
        to: usize,
        before: f64,
        after: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub lower_holds: bool,
    pub upper_holds: bool,
    /// Empirical; a failure here is reported but not fatal.
    pub deficit_monotone: bool,
    pub violations: Vec<SandwichViolation>,
}

impl SandwichReport {
    /// Both mass inequalities hold. Monotonicity is not part of this.
    pub fn holds(&self) -> bool {
        self.lower_holds && self.upper_holds
    }
}

pub fn check_mass_sandwich(records: &[ConvergenceRecord]) -> SandwichReport {
    let mut sorted: Vec<&ConvergenceRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.n_worlds);
    let mut violations = Vec::new();
    for r in &sorted {
        if r.mass_with_boundary < HALF_LINE_MASS {
            violations.push(SandwichViolation::LowerBound {
                n_worlds: r.n_worlds,
                mass_with_boundary: r.mass_with_boundary,
            });
        }
        if r.integral > HALF_LINE_MASS {
            violations.push(SandwichViolation::UpperBound {
                n_worlds: r.n_worlds,
                integral: r.integral,
            });
        }
    }
    let lower_holds = !violations
        .iter()
        .any(|v| matches!(v, SandwichViolation::LowerBound { .. }));
    let upper_holds = !violations
        .iter()
        .any(|v| matches!(v, SandwichViolation::UpperBound { .. }));
    let mut deficit_monotone = true;
    for w in sorted.windows(2) {
        let before = (w[0].mass_no_boundary - HALF_LINE_MASS).abs();
        let after = (w[1].mass_no_boundary - HALF_LINE_MASS).abs();
        if after > before {
            deficit_monotone = false;
            violations.push(SandwichViolation::NonMonotoneDeficit {
                from: w[0].n_worlds,
                to: w[1].n_worlds,
                before,
                after,
            });
        }
    }
    SandwichReport {
        lower_holds,
        upper_holds,
        deficit_monotone,
        violations,
    }
}

pub const MIN_ODE_WORLDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeLimitReport {
    pub n_worlds: usize,
    /// 1-based index range `[first, last]` of the interior worlds checked.
    pub interior: (usize, usize),
    /// Largest `|q_n - 2(1/x_n - 1) v_n|` over the interior, where `q_n` is
    /// the difference quotient `(v_n - v_{n+1}) / (x_n - x_{n+1})`.
    pub max_discrepancy: f64,
    /// Largest `|discrepancy - (x_n - 1) / ((N+1) x_n (x_n + x_{n+1}))|`.
    /// The correction term is exact at a solved configuration, so this is
    /// rounding noise there.
    pub max_identity_error: f64,
    /// `1 / ((N+1) x_N^2)`, the bound on the correction term.
    pub envelope: f64,
    pub within_envelope: bool,
    /// `max_identity_error <= tol * envelope`.
    pub identity_holds: bool,
}

/// Compares the discrete difference quotient of the stepped density with
/// the continuum equation `P' = 2(1/x - 1) P` on the interior worlds.
pub fn ode_limit_check(cfg: &WorldConfiguration, tol: f64) -> Result<OdeLimitReport, HarnessError> {
    let n = cfg.n_worlds();
    if n < MIN_ODE_WORLDS {
        return Err(HarnessError::TooFewWorlds { n, min: MIN_ODE_WORLDS });
    }
    let step = build_step_density(cfg)?;
    let xs = cfg.positions();
    let v = step.values();
    let scale = (n + 1) as f64;
    let skip = (n / 10).max(1);
    let (first, last) = (skip + 1, n - skip);

    let mut max_discrepancy: f64 = 0.0;
    let mut max_identity_error: f64 = 0.0;
    let mut max_correction: f64 = 0.0;
    for i in (first - 1)..last {
        let (x, next) = (xs[i], xs[i + 1]);
        let quotient = (v[i] - v[i + 1]) / (x - next);
        let discrepancy = quotient - 2.0 * (1.0 / x - 1.0) * v[i];
        let correction = (x - 1.0) / (scale * x * (x + next));
        max_discrepancy = max_discrepancy.max(discrepancy.abs());
        max_identity_error = max_identity_error.max((discrepancy - correction).abs());
        max_correction = max_correction.max(correction.abs());
    }
    let last_x = cfg.x_last();
    let envelope = 1.0 / (scale * last_x * last_x);
    Ok(OdeLimitReport {
        n_worlds: n,
        interior: (first, last),
        max_discrepancy,
        max_identity_error,
        envelope,
        within_envelope: max_discrepancy <= envelope * (1.0 + tol) && max_correction <= envelope,
        identity_holds: max_identity_error <= tol * envelope,
    })
}

/// Half-line CDF `2 int_0^x P`.
fn half_line_cdf(x: f64) -> f64 {
    2.0 * target_mass(0.0, Endpoint::Finite(x)).unwrap_or(0.0)
}

/// Baseline configuration with `x_n` at the `1 - (n - 1/2)/N` quantiles of
/// the half-line target. Not a solution of the boundary problem.
pub fn quantile_configuration(n_worlds: usize) -> Result<WorldConfiguration, HarnessError> {
    if n_worlds == 0 {
        return Err(HarnessError::Solve(SolveError::ZeroWorlds));
    }
    let positions = (1..=n_worlds)
        .map(|n| {
            let p = 1.0 - (n as f64 - 0.5) / n_worlds as f64;
            let (mut lo, mut hi) = (0.0f64, 64.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if half_line_cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    Ok(WorldConfiguration::from_positions(positions)?)
}

/// Distances from the stepped density to the target, for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub l1: f64,
    pub sup: f64,
    pub mass_deficit: f64,
}

pub fn distances(cfg: &WorldConfiguration) -> Result<Distances, HarnessError> {
    let step = build_step_density(cfg)?;
    let t = TargetDensity;
    Ok(Distances {
        l1: density_distance(&step, &t, Metric::L1),
        sup: density_distance(&step, &t, Metric::Sup),
        mass_deficit: density_distance(&step, &t, Metric::MassDeficit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, x_n: f64) -> ConvergenceRecord {
        ConvergenceRecord {
            n_worlds: n,
            x1: 1.0,
            x_n,
            mass_no_boundary: 0.5,
            mass_with_boundary: 0.6,
            integral: 0.4,
            mass_deficit: 0.0,
            h_n: 0.0,
            u_n: 0.0,
            v_n: 0.0,
            condition2_residual: 0.0,
            boundary_residual: 0.0,
            wall_time: 0.0,
        }
    }

    #[test]
    fn exact_power_law_recovered() {
        let records: Vec<_> = [2usize, 5, 10, 40, 100, 400]
            .iter()
            .map(|&n| synthetic(n, (n as f64).powf(-1.0 / 2.5)))
            .collect();
        let fit = fit_xn_scaling(&records).unwrap();
        assert!((fit.exponent_a - 2.5).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn single_world_excluded_from_fit() {
        let mut records: Vec<_> = [2usize, 5, 10, 40, 100]
            .iter()
            .map(|&n| synthetic(n, (n as f64).powf(-0.4)))
            .collect();
        records.push(synthetic(1, 123.0));
        let fit = fit_xn_scaling(&records).unwrap();
        assert_eq!(fit.fit_range, vec![2, 5, 10, 40, 100]);
        assert!((fit.exponent_a - 2.5).abs() < 1e-10);
    }

    #[test]
    fn fit_needs_enough_points() {
        let records: Vec<_> = [1usize, 2, 3, 3, 4].iter().map(|&n| synthetic(n, 0.5)).collect();
        assert!(matches!(
            fit_xn_scaling(&records),
            Err(HarnessError::InsufficientData { needed: 5, got: 3 })
        ));
        let flat: Vec<_> = (2..8).map(|n| synthetic(n, 0.5)).collect();
        assert!(matches!(fit_xn_scaling(&flat), Err(HarnessError::DegenerateFit { .. })));
    }

    #[test]
    fn sandwich_single_record_is_vacuous() {
        let report = check_mass_sandwich(&[synthetic(4, 0.5)]);
        assert!(report.holds());
        assert!(report.deficit_monotone);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn sandwich_flags_violations() {
        let mut a = synthetic(3, 0.5);
        a.mass_no_boundary = 0.51;
        let mut b = synthetic(4, 0.5);
        b.mass_no_boundary = 0.52;
        b.integral = 0.6;
        b.mass_with_boundary = 0.45;
        let report = check_mass_sandwich(&[b, a]);
        assert!(!report.lower_holds);
        assert!(!report.upper_holds);
        assert!(!report.deficit_monotone);
        assert_eq!(report.violations.len(), 3);
    }

    #[test]
    fn empty_sweep_rejected() {
        assert!(matches!(
            sweep(&[], &SolverConfig::default(), 1),
            Err(HarnessError::EmptySweep)
        ));
    }

    #[test]
    fn single_world_sweep() {
        let entries = sweep(&[1], &SolverConfig::default(), 1).unwrap();
        let r = entries[0].outcome.as_ref().unwrap();
        assert_eq!(r.x1, 1.0);
        assert_eq!(r.mass_no_boundary, 0.5);
        assert_eq!(r.h_n, -0.25);
    }

    #[test]
    fn sweep_keeps_failures_in_place() {
        let entries = sweep(&[3, 0, 2], &SolverConfig::default(), 2).unwrap();
        let ns: Vec<_> = entries.iter().map(|e| e.n_worlds).collect();
        assert_eq!(ns, vec![0, 2, 3]);
        assert!(entries[0].outcome.is_err());
        assert!(entries[1].outcome.is_ok() && entries[2].outcome.is_ok());
    }

    #[test]
    fn ode_check_rejects_small_n() {
        let cfg = solve_configuration(2, &SolverConfig::default()).unwrap();
        assert!(matches!(
            ode_limit_check(&cfg, 1e-9),
            Err(HarnessError::TooFewWorlds { n: 2, min: 20 })
        ));
    }

    #[test]
    fn quantile_baseline_is_ordered() {
        let cfg = quantile_configuration(40).unwrap();
        for w in cfg.positions().windows(2) {
            assert!(w[0] > w[1] && w[1] > 0.0);
        }
        // Median of the half-line target sits at the middle world.
        let mid = quantile_configuration(1).unwrap().x1();
        assert!((half_line_cdf(mid) - 0.5).abs() < 1e-12);
    }
}
