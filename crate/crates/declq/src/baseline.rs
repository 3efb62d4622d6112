//! Unconstrained centralized finite-horizon LQR via the classical backward
//! value recursion. Serves as an optimality lower bound for the decentralized
//! solver and as a per-block oracle on decoupled problems.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::model::{CostWeights, PartitionedSystem};
use crate::solver::SolveReport;
use crate::Error;

/// Output of [`centralized_lqr`].
#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    /// Full (unstructured) gains `K_c(k)`, `k = 0..=N`.
    pub gains: Vec<DMatrix<f64>>,
    /// Backward value matrices `P(0)..P(N+1)`.
    pub p_seq: Vec<DMatrix<f64>>,
    /// Optimal cost `x0' P(0) x0`.
    pub cost: f64,
}

/// Backward recursion from `P(N+1) = P_terminal`:
/// `K_c(k) = -(R + B'P(k+1)B)^-1 B'P(k+1)A`, then the value update with the
/// Schur-complement form. `R + B'P(k+1)B` is factored by Cholesky; a failed
/// factorization (possible only when `R` is merely PSD) is reported as a
/// conditioning error.
pub fn centralized_lqr(
    sys: &PartitionedSystem,
    cost: &CostWeights,
    horizon: usize,
    x0: &DVector<f64>,
) -> Result<CentralizedSolution, Error> {
    let (n, m) = (sys.n(), sys.m());
    if cost.q.nrows() != n || cost.r.nrows() != m || cost.p_terminal.nrows() != n {
        return Err(Error::Dimension("cost weights do not match the system".into()));
    }
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state length {} does not match n = {n}",
            x0.len()
        )));
    }

    let steps = horizon + 1;
    let mut gains = vec![DMatrix::zeros(m, n); steps];
    let mut p_seq = vec![DMatrix::zeros(n, n); steps + 1];
    let mut p = cost.p_terminal.clone();
    p_seq[steps] = p.clone();
    for k in (0..steps).rev() {
        let bt_p = sys.b.transpose() * &p;
        let upsilon = &cost.r + &bt_p * &sys.b;
        let upsilon = (&upsilon + upsilon.transpose()) * 0.5;
        let chol = Cholesky::new(upsilon).ok_or_else(|| {
            Error::Numerical(format!("R + B'PB is singular at step {k}"))
        })?;
        let gain = -chol.solve(&(&bt_p * &sys.a));
        let next = &cost.q
            + sys.a.transpose() * &p * &sys.a
            + sys.a.transpose() * &p * &sys.b * &gain;
        p = (&next + next.transpose()) * 0.5;
        p_seq[k] = p.clone();
        gains[k] = gain;
    }

    let cost_value = (&p_seq[0] * x0).dot(x0);
    Ok(CentralizedSolution { gains, p_seq, cost: cost_value })
}

/// Side-by-side summary of a decentralized run against the centralized
/// optimum for the same problem instance.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// `J_decentralized - J_centralized`; nonnegative up to rounding.
    pub cost_gap: f64,
    /// Per-step `max |blkdiag(K1, K2) - K_c(k)|`.
    pub gain_distances: Vec<f64>,
    pub max_residual: f64,
    pub mean_residual: f64,
}

/// Compares a decentralized report with a centralized solution, rejecting
/// schedules from different instances (mismatched lengths or shapes).
pub fn compare(
    dec: &SolveReport,
    cen: &CentralizedSolution,
) -> Result<ComparisonReport, Error> {
    if dec.gains.len() != cen.gains.len() {
        return Err(Error::Dimension(format!(
            "schedule lengths differ: {} vs {}",
            dec.gains.len(),
            cen.gains.len()
        )));
    }
    let mut gain_distances = Vec::with_capacity(dec.gains.len());
    for (pair, full) in dec.gains.iter().zip(&cen.gains) {
        let assembled = crate::model::assemble_gain(pair);
        if assembled.shape() != full.shape() {
            return Err(Error::Dimension(format!(
                "gain shapes differ: {:?} vs {:?}",
                assembled.shape(),
                full.shape()
            )));
        }
        gain_distances.push((assembled - full).amax());
    }
    let max_residual = dec.residuals.iter().cloned().fold(0.0, f64::max);
    let mean_residual = if dec.residuals.is_empty() {
        0.0
    } else {
        dec.residuals.iter().sum::<f64>() / dec.residuals.len() as f64
    };
    Ok(ComparisonReport {
        cost_gap: dec.cost - cen.cost,
        gain_distances,
        max_residual,
        mean_residual,
    })
}
