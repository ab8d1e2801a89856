//! Empirical and exact divergence machinery: discrete KL, the
//! joint-bounds-marginal check, histogram KL estimation between sample
//! clouds, mode-coverage statistics, and the parameter-perturbation
//! scaling probe.
//!
//! Everything here is pure and safe to call from parallel code.

mod histogram;
mod modes;
mod taylor;

pub use histogram::{kl_histogram, HistogramEstimator};
pub use modes::{mode_coverage, Coverage, ModeSpec};
pub use taylor::{random_unit_direction, taylor_scaling_probe, zero_perturbation_kl, TaylorProbe};

use rand::Rng;

use crate::error::{Error, Result};

const JOINT_TOL: f64 = 1e-12;

/// `sum_i p_i ln(p_i / q_i)` over matching supports. Zero-probability `p`
/// entries contribute nothing; a zero `q` under positive `p` is a support
/// violation.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut s = 0.0;
    for i in 0..p.len() {
        if p[i] == 0.0 {
            continue;
        }
        if q[i] == 0.0 {
            return Err(Error::Support { index: i, p: p[i] });
        }
        s += p[i] * (p[i] / q[i]).ln();
    }
    Ok(s)
}

/// An `m x n` joint distribution over `(x, z)`: nonnegative entries summing
/// to 1 within 1e-12. Rows index `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    rows: usize,
    cols: usize,
    table: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(rows: usize, cols: usize, table: Vec<f64>) -> Result<DiscreteJoint> {
        if rows == 0 || cols == 0 || table.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "table of {} entries does not fill {}x{}",
                table.len(),
                rows,
                cols
            )));
        }
        if table.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Contract("joint entries must be finite and nonnegative".into()));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > JOINT_TOL {
            return Err(Error::Contract(format!("joint sums to {} (must be 1 within 1e-12)", sum)));
        }
        Ok(DiscreteJoint { rows, cols, table })
    }

    /// Random joint with i.i.d. `Exp(1)` entries normalized to 1 — a flat
    /// Dirichlet draw over the whole table.
    pub fn random_dirichlet<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DiscreteJoint {
        let mut table: Vec<f64> = (0..rows * cols)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                -u.ln()
            })
            .collect();
        let sum: f64 = table.iter().sum();
        for v in &mut table {
            *v /= sum;
        }
        // renormalize exactly enough for the simplex check
        let sum2: f64 = table.iter().sum();
        table[0] += 1.0 - sum2;
        DiscreteJoint::new(rows, cols, table).expect("normalized table")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Marginal over `x` (row sums).
    pub fn x_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.rows];
        for r in 0..self.rows {
            for c in 0..self.cols {
                m[r] += self.table[r * self.cols + c];
            }
        }
        m
    }
}

/// Result of [`joint_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub kl_joint: f64,
    pub kl_marginal: f64,
    pub holds: bool,
}

/// Computes `KL` between two joints and between their `x`-marginals, and
/// reports whether `kl_joint >= kl_marginal - 1e-12`. The inequality is a
/// theorem; a `false` here means a bug.
pub fn joint_bound_check(pj: &DiscreteJoint, qj: &DiscreteJoint) -> Result<BoundCheck> {
    if pj.shape() != qj.shape() {
        return Err(Error::Contract(format!(
            "joint shapes differ: {:?} vs {:?}",
            pj.shape(),
            qj.shape()
        )));
    }
    let kl_joint = kl_discrete(pj.table(), qj.table())?;
    let kl_marginal = kl_discrete(&pj.x_marginal(), &qj.x_marginal())?;
    Ok(BoundCheck { kl_joint, kl_marginal, holds: kl_joint >= kl_marginal - JOINT_TOL })
}
