//! Potential updates and the runner that drives them.
//!
//! Every method maps a potential `φ` on the atoms of ν to a new one using
//! only the Y-marginal `p = π(φ)_Y`:
//!
//! | method | update |
//! |---|---|
//! | Φ-match | `φ − η (log Φ(p) − log Φ(b))` |
//! | sign ascent | `φ + η ‖b − p‖₁ sign(b − p)`, re-anchored |
//! | projected ascent | `clamp(φ + η (b − p)/b, −B, B)` |
//!
//! The accelerated projected method adds FISTA momentum on top of the
//! projected step (see [`run`]).

mod oracle;
mod runner;
mod trace;

pub use oracle::{oracle_solve, oracle_solve_with, OracleSolution, DEFAULT_ORACLE_TOL};
pub use runner::{run, Method, RunOutcome, SolverConfig, StepSize, DIVERGENCE_TOL};
pub use trace::{Trace, TraceRecord};

use crate::kernels::{self, Gram};
use crate::numeric::{self, logsumexp};
use crate::semidual::{self, Evaluation};
use crate::{Error, Instance, Potential, Result};

/// The positive operator `Φ` of a Φ-match update, represented through
/// `log Φ`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiOperator {
    /// `log Φ(ξ) = log ξ`: Sinkhorn and η-Sinkhorn.
    Identity,
    /// `log Φ(ξ) = ξ`: semi-dual gradient ascent.
    Exp,
    /// `log Φ(ξ) = Kξ`: kernel-smoothed ascent.
    ExpKernel(Gram),
    /// `log Φ(ξ) = ξ/b − 1`.
    ChiSquare,
}

impl PhiOperator {
    pub fn name(&self) -> &'static str {
        match self {
            PhiOperator::Identity => "identity",
            PhiOperator::Exp => "exp",
            PhiOperator::ExpKernel(_) => "exp_kernel",
            PhiOperator::ChiSquare => "chi_square",
        }
    }
}

/// `log Φ(ξ)` for a mass vector on the atoms of ν.
///
/// Identity needs `ξ > 0`; ChiSquare divides by the weights of ν, which are
/// positive by construction.
pub fn log_phi(op: &PhiOperator, xi: &[f64], inst: &Instance) -> Result<Vec<f64>> {
    semidual::check_y_len(xi, inst)?;
    match op {
        PhiOperator::Identity => {
            if let Some(v) = xi.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::Precondition(format!(
                    "log Φ with Φ = id needs positive masses, got {v}"
                )));
            }
            Ok(xi.iter().map(|v| v.ln()).collect())
        }
        PhiOperator::Exp => Ok(xi.to_vec()),
        PhiOperator::ExpKernel(g) => {
            if g.len() != inst.m() {
                return Err(Error::DimensionMismatch {
                    expected: inst.m(),
                    got: g.len(),
                });
            }
            Ok(kernels::mean_embedding(g, xi))
        }
        PhiOperator::ChiSquare => Ok(xi.iter().zip(inst.b()).map(|(x, b)| x / b - 1.0).collect()),
    }
}

/// `log Φ(p) − log Φ(b)` from an evaluation. For the identity operator the
/// log-marginal is used directly rather than exponentiated and logged back.
pub(crate) fn log_phi_residual(op: &PhiOperator, eval: &Evaluation, inst: &Instance) -> Result<Vec<f64>> {
    match op {
        PhiOperator::Identity => Ok(eval
            .log_marginal_y
            .iter()
            .zip(inst.log_b())
            .map(|(lp, lb)| lp - lb)
            .collect()),
        PhiOperator::Exp | PhiOperator::ChiSquare => {
            let p = eval.marginal_y();
            let lp = log_phi(op, &p, inst)?;
            let lb = log_phi(op, inst.b(), inst)?;
            Ok(lp.iter().zip(&lb).map(|(x, y)| x - y).collect())
        }
        PhiOperator::ExpKernel(g) => {
            // K p − K b = K (p − b) keeps the difference exact near the fixed point.
            let p = eval.marginal_y();
            let d: Vec<f64> = p.iter().zip(inst.b()).map(|(x, y)| x - y).collect();
            if g.len() != inst.m() {
                return Err(Error::DimensionMismatch {
                    expected: inst.m(),
                    got: g.len(),
                });
            }
            Ok(kernels::mean_embedding(g, &d))
        }
    }
}

fn check_potential(phi: &Potential, inst: &Instance) -> Result<()> {
    if phi.len() != inst.m() {
        return Err(Error::DimensionMismatch {
            expected: inst.m(),
            got: phi.len(),
        });
    }
    Ok(())
}

/// One Φ-match step `φ' = φ − η (log Φ(p) − log Φ(b))`.
pub fn phi_match_step(phi: &Potential, inst: &Instance, op: &PhiOperator, eta: f64) -> Result<Potential> {
    check_potential(phi, inst)?;
    let eval = semidual::evaluate(phi, inst);
    phi_match_from(phi, &eval, inst, op, eta)
}

pub(crate) fn phi_match_from(
    phi: &Potential,
    eval: &Evaluation,
    inst: &Instance,
    op: &PhiOperator,
    eta: f64,
) -> Result<Potential> {
    let v = log_phi_residual(op, eval, inst)?;
    let next: Vec<f64> = phi.iter().zip(&v).map(|(p, d)| p - eta * d).collect();
    Potential::new(next)
}

/// `min{1/(2 c_k), 1}`.
pub fn auto_eta_ksga(g: &Gram) -> f64 {
    (0.5 / g.c_k()).min(1.0)
}

/// One sign-ascent step re-anchored so that `φ[anchor]` is unchanged.
/// `sign(0) = 0`, so the optimum is a literal fixed point.
pub fn sign_sga_step(phi: &Potential, inst: &Instance, eta: f64, anchor: usize) -> Result<Potential> {
    check_potential(phi, inst)?;
    if anchor >= inst.m() {
        return Err(Error::Config(format!("anchor {anchor} out of range for {} atoms", inst.m())));
    }
    let eval = semidual::evaluate(phi, inst);
    Ok(sign_sga_from(phi, &eval, inst, eta, anchor))
}

pub(crate) fn sign_sga_from(phi: &Potential, eval: &Evaluation, inst: &Instance, eta: f64, anchor: usize) -> Potential {
    let delta = eval.first_variation(inst);
    let norm = numeric::sum(delta.iter().map(|d| d.abs()));
    let half: Vec<f64> = phi
        .iter()
        .zip(&delta)
        .map(|(p, d)| p + eta * norm * sign(*d))
        .collect();
    let shift = half[anchor] - phi[anchor];
    let mut next: Vec<f64> = half.iter().map(|v| v - shift).collect();
    // Write the anchor back exactly; the subtraction above can be off by an ulp.
    next[anchor] = phi[anchor];
    Potential::from_vec_unchecked(next)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `log λ(B) = 2B + log Σ_ij a_i b_j exp(c_ij/ε)`. Requires `c ≥ 0`.
pub fn lambda_bound(inst: &Instance, bound: f64) -> Result<f64> {
    if !inst.has_nonnegative_cost() {
        return Err(Error::Precondition("the smoothness constant needs a nonnegative cost".into()));
    }
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::Config(format!("B must be a nonnegative number, got {bound}")));
    }
    let (log_a, log_b, sc) = (inst.log_a(), inst.log_b(), inst.scaled_cost());
    let m = inst.m();
    let lse = logsumexp((0..inst.n() * m).map(|k| {
        let (i, j) = (k / m, k % m);
        log_a[i] + log_b[j] + sc[[i, j]]
    }));
    Ok(2.0 * bound + lse)
}

/// `1.5 · max |c_ij|`, a radius that contains a pair of optimal potentials.
pub fn default_b(inst: &Instance) -> f64 {
    1.5 * inst.max_abs_cost()
}

/// One projected step `clamp(φ + η (b − p)/b, −B, B)`.
pub fn proj_sga_step(phi: &Potential, inst: &Instance, bound: f64, eta: f64) -> Result<Potential> {
    check_potential(phi, inst)?;
    if let Some(v) = phi.iter().find(|v| v.abs() > bound) {
        return Err(Error::Precondition(format!("potential entry {v} lies outside [−{bound}, {bound}]")));
    }
    let eval = semidual::evaluate(phi, inst);
    Ok(proj_sga_from(phi, &eval, inst, bound, eta))
}

pub(crate) fn proj_sga_from(phi: &Potential, eval: &Evaluation, inst: &Instance, bound: f64, eta: f64) -> Potential {
    let p = eval.marginal_y();
    let next = phi
        .iter()
        .zip(&p)
        .zip(inst.b())
        .map(|((f, p), b)| (f + eta * (b - p) / b).clamp(-bound, bound))
        .collect();
    Potential::from_vec_unchecked(next)
}

/// `(1 + √(1 + 4t²)) / 2`.
pub fn t_next(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}
