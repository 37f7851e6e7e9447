use super::{phi_match_from, PhiOperator};
use crate::semidual::evaluate;
use crate::{Error, Instance, Potential, Result};

/// Residual the reference solution is driven to by default.
pub const DEFAULT_ORACLE_TOL: f64 = 1e-12;

const ORACLE_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Optimal potential with `φ[0] = 0`.
    pub potential: Potential,
    pub residual: f64,
    pub iterations: usize,
}

/// High-precision reference potential: plain Sinkhorn from zero until the
/// L¹ residual is at most `tol`, then shifted so that `φ[0] = 0`.
pub fn oracle_solve(inst: &Instance, tol: f64) -> Result<Potential> {
    oracle_solve_with(inst, tol, ORACLE_MAX_ITER).map(|s| s.potential)
}

pub fn oracle_solve_with(inst: &Instance, tol: f64, max_iter: usize) -> Result<OracleSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("oracle tolerance must be positive, got {tol}")));
    }
    let mut phi = Potential::zeros(inst.m());
    let mut eval = evaluate(&phi, inst);
    let mut residual = eval.l1_residual(inst);
    let mut iterations = 0;
    while residual > tol {
        if iterations == max_iter {
            return Err(Error::OracleNotConverged { iterations, residual });
        }
        phi = phi_match_from(&phi, &eval, inst, &PhiOperator::Identity, 1.0)?;
        eval = evaluate(&phi, inst);
        residual = eval.l1_residual(inst);
        iterations += 1;
    }
    Ok(OracleSolution {
        potential: phi.anchored(0),
        residual,
        iterations,
    })
}
