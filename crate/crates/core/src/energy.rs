//! Interworld potential, Coulomb potential and the average Hamiltonian of a
//! configuration.
//!
//! The interworld potential uses the difference form
//!
//! ```text
//! U_N = (1/2) sum_{n=1}^N D_n^2 x_n^4,
//! D_n = 1/(x_n (x_n^2 - x_{n+1}^2)) - 1/(x_{n-1} (x_{n-1}^2 - x_n^2))
//! ```
//!
//! with `x_0 = inf` (the backward term vanishes at `n = 1`) and
//! `x_{N+1} = 0`. Because `sum_n D_n x_n^2 = sum_n 1/x_n` for any ordered
//! configuration, Cauchy-Schwarz gives `U_N >= (sum 1/x_n)^2 / (2N)` and
//! hence `H_N >= -N / (2(N+1))` everywhere, with equality at the solved
//! configuration.

use core::fmt;

use crate::model::WorldConfiguration;
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyError {
    /// `x_n <= x_{n+1}` (1-based `n`), including `x_N <= 0`.
    Degenerate {
        index: usize,
    },
    MomentaLength {
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for EnergyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyError::Degenerate { index } => {
                write!(f, "configuration is not strictly decreasing and positive at x_{index}")
            }
            EnergyError::MomentaLength { expected, got } => {
                write!(f, "expected {expected} momenta, got {got}")
            }
        }
    }
}

impl core::error::Error for EnergyError {}

fn check_ordered(xs: &[f64]) -> Result<(), EnergyError> {
    for (i, &x) in xs.iter().enumerate() {
        let next = xs.get(i + 1).copied().unwrap_or(0.0);
        if !(x > next) {
            return Err(EnergyError::Degenerate { index: i + 1 });
        }
    }
    Ok(())
}

/// `1 / (x_n (x_n^2 - x_{n+1}^2))` for each `n`, with `x_{N+1} = 0`.
fn forward_terms(xs: &[f64]) -> impl Iterator<Item = f64> + '_ {
    xs.iter().enumerate().map(move |(i, &x)| {
        let next = xs.get(i + 1).copied().unwrap_or(0.0);
        1.0 / (x * (x - next) * (x + next))
    })
}

/// `U_N` in dimensionless units.
pub fn interworld_potential(cfg: &WorldConfiguration) -> Result<f64, EnergyError> {
    let xs = cfg.positions();
    check_ordered(xs)?;
    let mut acc = NeumaierSum::new();
    let mut previous = 0.0;
    for (&x, forward) in xs.iter().zip(forward_terms(xs)) {
        let d = forward - previous;
        let term = d * x * x;
        acc.add(term * term);
        previous = forward;
    }
    Ok(0.5 * acc.value())
}

/// Cauchy-Schwarz lower bound `(sum 1/x_n)^2 / (2N)` on `U_N`.
pub fn interworld_lower_bound(cfg: &WorldConfiguration) -> f64 {
    let xs = cfg.positions();
    let s: NeumaierSum = xs.iter().map(|x| 1.0 / x).collect();
    let s = s.value();
    s * s / (2.0 * xs.len() as f64)
}

/// `V_N = -sum 1/x_n` over the half-line worlds.
pub fn coulomb_potential(cfg: &WorldConfiguration) -> Result<f64, EnergyError> {
    let xs = cfg.positions();
    check_ordered(xs)?;
    let s: NeumaierSum = xs.iter().map(|x| 1.0 / x).collect();
    Ok(-s.value())
}

/// `sum p_n^2 / (2m)` with `m = 1`.
pub fn kinetic_energy(momenta: &[f64]) -> f64 {
    momenta.iter().map(|p| 0.5 * p * p).collect::<NeumaierSum>().value()
}

/// `-N / (2(N+1))`, the minimum of the average Hamiltonian.
pub fn hamiltonian_lower_bound(n_worlds: usize) -> f64 {
    let n = n_worlds as f64;
    -n / (2.0 * (n + 1.0))
}

#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyResiduals {
    /// `|U_N - N/2|`
    pub interworld: f64,
    /// `|V_N + N|`
    pub coulomb: f64,
    /// `|H_N - h_bound|`
    pub hamiltonian: f64,
}

#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub n_worlds: usize,
    /// Kinetic energy. The stationary analysis has all momenta zero.
    pub kinetic: f64,
    pub u_n: f64,
    pub v_n: f64,
    /// `(K + U_N + V_N) / (N + 1)`.
    pub h_n: f64,
    pub h_bound: f64,
    /// `(sum 1/x_n)^2 / (2N)`.
    pub u_lower_bound: f64,
    pub residuals: EnergyResiduals,
}

impl EnergyReport {
    /// `H_N >= h_bound - tol`.
    pub fn respects_bound(&self, tol: f64) -> bool {
        self.h_n >= self.h_bound - tol
    }
}

/// Energy report with zero momenta.
pub fn average_hamiltonian(cfg: &WorldConfiguration) -> Result<EnergyReport, EnergyError> {
    hamiltonian_with_momenta(cfg, None)
}

/// Energy report with the kinetic term included. `momenta` must have one
/// entry per world when given.
pub fn hamiltonian_with_momenta(
    cfg: &WorldConfiguration,
    momenta: Option<&[f64]>,
) -> Result<EnergyReport, EnergyError> {
    let n_worlds = cfg.n_worlds();
    let kinetic = match momenta {
        None => 0.0,
        Some(p) if p.len() == n_worlds => kinetic_energy(p),
        Some(p) => {
            return Err(EnergyError::MomentaLength {
                expected: n_worlds,
                got: p.len(),
            })
        }
    };
    let u_n = interworld_potential(cfg)?;
    let v_n = coulomb_potential(cfg)?;
    let n = n_worlds as f64;
    let h_n = (kinetic + u_n + v_n) / (n + 1.0);
    let h_bound = hamiltonian_lower_bound(n_worlds);
    Ok(EnergyReport {
        n_worlds,
        kinetic,
        u_n,
        v_n,
        h_n,
        h_bound,
        u_lower_bound: interworld_lower_bound(cfg),
        residuals: EnergyResiduals {
            interworld: libm::fabs(u_n - 0.5 * n),
            coulomb: libm::fabs(v_n + n),
            hamiltonian: libm::fabs(h_n - h_bound),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_configuration, SolverConfig};
    use alloc::vec;

    #[test]
    fn single_world() {
        let cfg = WorldConfiguration::from_positions(vec![1.0]).unwrap();
        assert_eq!(interworld_potential(&cfg).unwrap(), 0.5);
        assert_eq!(coulomb_potential(&cfg).unwrap(), -1.0);
        let r = average_hamiltonian(&cfg).unwrap();
        assert_eq!(r.h_n, -0.25);
        assert_eq!(r.h_bound, -0.25);
        assert_eq!(r.kinetic, 0.0);
    }

    #[test]
    fn coulomb_of_unsolved() {
        let cfg = WorldConfiguration::from_positions(vec![2.0, 1.0]).unwrap();
        assert_eq!(coulomb_potential(&cfg).unwrap(), -1.5);
    }

    #[test]
    fn hand_interworld_two_worlds() {
        // x = [2, 1]: forward terms 1/(2*3) and 1/(1*1).
        // D_1 = 1/6, D_2 = 1 - 1/6 = 5/6.
        // U = (1/2)((1/6 * 4)^2 + (5/6)^2) = (1/2)(4/9 + 25/36) = 41/72.
        let cfg = WorldConfiguration::from_positions(vec![2.0, 1.0]).unwrap();
        assert!((interworld_potential(&cfg).unwrap() - 41.0 / 72.0).abs() < 1e-15);
        // Bound: (1/2 + 1)^2 / 4 = 9/16 < 41/72.
        assert!((interworld_lower_bound(&cfg) - 9.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn identities_at_solution() {
        for n in [1usize, 2, 5, 11, 21, 50, 100, 200] {
            let cfg = solve_configuration(n, &SolverConfig::default()).unwrap();
            let r = average_hamiltonian(&cfg).unwrap();
            let nf = n as f64;
            assert!(r.residuals.interworld / nf < 1e-9, "n = {n}: {r:?}");
            assert!(r.residuals.coulomb / nf < 1e-9, "n = {n}: {r:?}");
            assert!(r.residuals.hamiltonian < 1e-9, "n = {n}: {r:?}");
            assert!((r.u_n - r.u_lower_bound).abs() / nf < 1e-9);
        }
    }

    #[test]
    fn momenta_raise_energy() {
        let cfg = solve_configuration(3, &SolverConfig::default()).unwrap();
        let base = average_hamiltonian(&cfg).unwrap();
        let moving = hamiltonian_with_momenta(&cfg, Some(&[1.0, 0.0, -1.0])).unwrap();
        assert_eq!(moving.kinetic, 1.0);
        assert!((moving.h_n - (base.h_n + 0.25)).abs() < 1e-15);
        assert_eq!(
            hamiltonian_with_momenta(&cfg, Some(&[1.0])),
            Err(EnergyError::MomentaLength { expected: 3, got: 1 })
        );
    }

    #[test]
    fn degenerate_rejected() {
        let cfg = WorldConfiguration::from_positions(vec![1.0, 1.0]).unwrap();
        assert_eq!(interworld_potential(&cfg), Err(EnergyError::Degenerate { index: 1 }));
        let cfg = WorldConfiguration::from_positions(vec![1.0, 0.0]).unwrap();
        assert_eq!(coulomb_potential(&cfg), Err(EnergyError::Degenerate { index: 2 }));
    }
}
