//! The coupling-space view of Φ-match updates.
//!
//! A Φ-match step on `φ` moves `π(φ)` by two projections: a column
//! reweighting that corrects the Y-marginal towards `Φ`-matching, then a
//! row-wise geometric interpolation that restores the X-marginal `a`. The
//! same point is reached by a Gibbs reweighting of rows (the root step) and
//! by a mirror step under the KL mirror map relative to
//! `π_ref ∝ exp(−c/ε) a ⊗ b`. All couplings here are handled through their
//! log masses.

use ndarray::Array2;

use crate::numeric::logsumexp;
use crate::semidual::log_reference;
use crate::solvers::{log_phi, PhiOperator};
use crate::{Coupling, Error, Instance, Potential, Result, XPotential};

/// A separable function `h_ij = f_i + g_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPair {
    pub f: XPotential,
    pub g: Potential,
}

impl DualPair {
    pub fn new(f: XPotential, g: Potential) -> Self {
        Self { f, g }
    }

    /// `0 ⊕ g`.
    pub fn from_y(g: Potential, n: usize) -> Self {
        Self {
            f: XPotential::zeros(n),
            g,
        }
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.f.len(), self.g.len()), |(i, j)| self.f[i] + self.g[j])
    }
}

fn check_shape(pi: &Coupling, inst: &Instance) -> Result<()> {
    let (n, m) = pi.shape();
    if n != inst.n() {
        return Err(Error::DimensionMismatch { expected: inst.n(), got: n });
    }
    if m != inst.m() {
        return Err(Error::DimensionMismatch { expected: inst.m(), got: m });
    }
    Ok(())
}

fn check_positive(pi: &Coupling) -> Result<()> {
    if pi.log_masses().iter().any(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::Precondition("coupling must be strictly positive".into()));
    }
    Ok(())
}

/// `log Φ(π_Y) − log Φ(b)` for a coupling, as a vector over ν.
fn potential_residual(pi: &Coupling, inst: &Instance, op: &PhiOperator) -> Result<Vec<f64>> {
    let v = match op {
        PhiOperator::Identity => pi
            .log_y_marginal()
            .iter()
            .zip(inst.log_b())
            .map(|(lp, lb)| lp - lb)
            .collect(),
        _ => {
            let lp = log_phi(op, &pi.y_marginal(), inst)?;
            let lb = log_phi(op, inst.b(), inst)?;
            lp.iter().zip(&lb).map(|(x, y)| x - y).collect()
        }
    };
    Ok(v)
}

/// Rescales row `i` of `log_mass` so it sums to `a_i`.
fn normalize_rows(mut log_mass: Array2<f64>, inst: &Instance) -> Array2<f64> {
    for (i, mut row) in log_mass.rows_mut().into_iter().enumerate() {
        let shift = inst.log_a()[i] - logsumexp(row.iter().copied());
        row.mapv_inplace(|v| v + shift);
    }
    log_mass
}

/// Y-side projection: `π'_ij = π_ij w_j / Z` with
/// `w_j = exp(log Φ(b)_j − log Φ(p)_j)` and `Z` the total mass.
pub fn project_y(pi: &Coupling, inst: &Instance, op: &PhiOperator) -> Result<Coupling> {
    check_shape(pi, inst)?;
    check_positive(pi)?;
    let v = potential_residual(pi, inst, op)?;
    let mut log_mass = pi.log_masses().clone();
    for ((_, j), lm) in log_mass.indexed_iter_mut() {
        *lm -= v[j];
    }
    let log_z = logsumexp(log_mass.iter().copied());
    log_mass.mapv_inplace(|lm| lm - log_z);
    Coupling::from_log(log_mass)
}

/// X-side projection: row conditionals `∝ π_half^η π^{1−η}`, with row sums
/// reset to `a`.
pub fn project_x(pi_half: &Coupling, pi: &Coupling, inst: &Instance, eta: f64) -> Result<Coupling> {
    check_shape(pi_half, inst)?;
    check_shape(pi, inst)?;
    check_positive(pi_half)?;
    check_positive(pi)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("interpolation weight must lie in [0, 1], got {eta}")));
    }
    let mixed = Array2::from_shape_fn(pi.shape(), |(i, j)| {
        let (h, p) = (pi_half.log_masses()[[i, j]], pi.log_masses()[[i, j]]);
        // Skip the zero-weight factor so η ∈ {0, 1} reproduces its input exactly.
        if eta == 1.0 {
            h
        } else if eta == 0.0 {
            p
        } else {
            eta * h + (1.0 - eta) * p
        }
    });
    Coupling::from_log(normalize_rows(mixed, inst))
}

/// `V_ij = log Φ(p)_j − log Φ(b)_j`, identical across rows.
pub fn v_phi(pi: &Coupling, inst: &Instance, op: &PhiOperator) -> Result<Array2<f64>> {
    check_shape(pi, inst)?;
    check_positive(pi)?;
    let v = potential_residual(pi, inst, op)?;
    Ok(Array2::from_shape_fn(pi.shape(), |(_, j)| v[j]))
}

/// Root step in closed form: `π'_ij = a_i π_ij e^{−η V_ij} / Σ_k π_ik e^{−η V_ik}`.
///
/// This is the minimiser of `η⟨V, π'⟩ + d_KL(π' ‖ π)` over couplings with
/// X-marginal `a`, and coincides with `project_x(project_y(π), π, η)`.
pub fn root_step(pi: &Coupling, inst: &Instance, op: &PhiOperator, eta: f64) -> Result<Coupling> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("step must lie in [0, 1], got {eta}")));
    }
    let v = v_phi(pi, inst, op)?;
    let tilted = Array2::from_shape_fn(pi.shape(), |(i, j)| pi.log_masses()[[i, j]] - eta * v[[i, j]]);
    Coupling::from_log(normalize_rows(tilted, inst))
}

/// Mirror map `log(π / π_ref)`.
pub fn mirror_fwd(pi: &Coupling, inst: &Instance) -> Result<Array2<f64>> {
    check_shape(pi, inst)?;
    check_positive(pi)?;
    Ok(pi.log_masses() - &log_reference(inst))
}

/// Inverse mirror map restricted to X-marginal `a`:
/// `π_ij = a_i π_ref,ij e^{h_ij} / Σ_k π_ref,ik e^{h_ik}`.
pub fn mirror_bwd(h: &Array2<f64>, inst: &Instance) -> Result<Coupling> {
    if h.dim() != (inst.n(), inst.m()) {
        return Err(Error::DimensionMismatch {
            expected: inst.n() * inst.m(),
            got: h.len(),
        });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mirror argument"));
    }
    Ok(mirror_bwd_with(&log_reference(inst), h, inst))
}

/// [`mirror_bwd`] against a precomputed `log π_ref`, skipping validation.
pub(crate) fn mirror_bwd_with(log_ref: &Array2<f64>, h: &Array2<f64>, inst: &Instance) -> Coupling {
    Coupling::from_log(normalize_rows(log_ref + h, inst)).expect("finite arguments give finite log masses")
}

/// `mirror_bwd(mirror_fwd(π) − η V_Φ(π))`.
pub fn mirror_step(pi: &Coupling, inst: &Instance, op: &PhiOperator, eta: f64) -> Result<Coupling> {
    let h = mirror_fwd(pi, inst)? - v_phi(pi, inst, op)? * eta;
    mirror_bwd(&h, inst)
}

/// Largest `|Σ_j π_ij − a_i|`.
pub fn x_marginal_error(pi: &Coupling, inst: &Instance) -> f64 {
    pi.x_marginal()
        .iter()
        .zip(inst.a())
        .fold(0.0_f64, |m, (r, a)| m.max((r - a).abs()))
}

/// Distance of `π` from the factorised class `exp(g_j − f_i − c_ij/ε) a_i b_j`.
///
/// With `R_ij = log π_ij + c_ij/ε − log a_i − log b_j`, membership means
/// `R` is separable, so the double difference
/// `R_ij − R_i0 − R_0j + R_00` vanishes. Returns its largest magnitude.
pub fn q_residual(pi: &Coupling, inst: &Instance) -> f64 {
    let (lm, sc) = (pi.log_masses(), inst.scaled_cost());
    let r = |i: usize, j: usize| lm[[i, j]] + sc[[i, j]] - inst.log_a()[i] - inst.log_b()[j];
    let mut worst = 0.0_f64;
    for i in 0..inst.n() {
        for j in 0..inst.m() {
            let d = r(i, j) - r(i, 0) - r(0, j) + r(0, 0);
            worst = worst.max(if d.is_nan() { f64::INFINITY } else { d.abs() });
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_instance, random_potential, rng};
    use crate::semidual::{coupling, log_z_ref, plus_transform};

    #[test]
    fn identity_projection_hits_b() {
        let inst = random_instance(3, 4, 0.5, 1);
        let pi = coupling(&random_potential(&mut rng(2), 4, 1.0), &inst);
        let out = project_y(&pi, &inst, &PhiOperator::Identity).unwrap();
        for (p, b) in out.y_marginal().iter().zip(inst.b()) {
            assert!((p - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_fixes_matched_coupling() {
        let inst = random_instance(3, 4, 0.5, 1);
        let phi = crate::solvers::oracle_solve(&inst, 1e-13).unwrap();
        let pi = coupling(&phi, &inst);
        let out = project_y(&pi, &inst, &PhiOperator::Exp).unwrap();
        assert!(out.max_log_diff(&pi) < 1e-12);
    }

    #[test]
    fn project_x_endpoints() {
        let inst = random_instance(3, 4, 0.5, 5);
        let pi = coupling(&random_potential(&mut rng(6), 4, 1.0), &inst);
        let other = coupling(&random_potential(&mut rng(7), 4, 1.0), &inst);
        let half = project_y(&other, &inst, &PhiOperator::Exp).unwrap();
        assert!(project_x(&half, &pi, &inst, 0.0).unwrap().max_log_diff(&pi) < 1e-14);
        let one = project_x(&half, &pi, &inst, 1.0).unwrap();
        assert!(x_marginal_error(&one, &inst) < 1e-15);
        assert!(project_x(&half, &pi, &inst, 1.5).is_err());
    }

    #[test]
    fn v_phi_rows() {
        let inst = random_instance(2, 3, 0.5, 3);
        let pi = coupling(&random_potential(&mut rng(4), 3, 1.0), &inst);
        let p = pi.y_marginal();
        let v = v_phi(&pi, &inst, &PhiOperator::ChiSquare).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((v[[i, j]] - (p[j] / inst.b()[j] - 1.0)).abs() < 1e-14);
            }
        }
        let exp = v_phi(&pi, &inst, &PhiOperator::Exp).unwrap();
        assert!((exp[[1, 2]] - (p[2] - inst.b()[2])).abs() < 1e-15);
    }

    #[test]
    fn root_step_with_zero_eta_is_identity() {
        let inst = random_instance(3, 4, 0.5, 9);
        let pi = coupling(&random_potential(&mut rng(1), 4, 1.0), &inst);
        let out = root_step(&pi, &inst, &PhiOperator::Identity, 0.0).unwrap();
        assert!(out.max_log_diff(&pi) < 1e-14);
    }

    #[test]
    fn mirror_maps() {
        let inst = random_instance(3, 4, 0.5, 10);
        let reference = Coupling::from_log(log_reference(&inst)).unwrap();
        let h = mirror_fwd(&reference, &inst).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-14));

        let phi = random_potential(&mut rng(11), 4, 1.0);
        let pi = coupling(&phi, &inst);
        let fwd = mirror_fwd(&pi, &inst).unwrap();
        let plus = plus_transform(&phi, &inst);
        let lz = log_z_ref(&inst);
        for i in 0..3 {
            for j in 0..4 {
                assert!((fwd[[i, j]] - (phi[j] - plus[i] + lz)).abs() < 1e-12);
            }
        }
        assert!(mirror_bwd(&fwd, &inst).unwrap().max_log_diff(&pi) < 1e-12);
        let h = DualPair::from_y(phi.clone(), 3).to_matrix();
        assert!(mirror_bwd(&h, &inst).unwrap().max_log_diff(&pi) < 1e-12);
    }

    #[test]
    fn q_residual_detects_non_members() {
        let inst = random_instance(3, 4, 0.5, 12);
        let pi = coupling(&random_potential(&mut rng(13), 4, 1.0), &inst);
        assert!(q_residual(&pi, &inst) < 1e-12);
        let mut lm = pi.log_masses().clone();
        lm[[1, 2]] += 0.1;
        assert!(q_residual(&Coupling::from_log(lm).unwrap(), &inst) > 0.09);
    }
}
