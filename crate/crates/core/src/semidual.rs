//! The semi-dual objective and its companions, all in log domain.
//!
//! With `A = log a`, `B = log b` and `C = c / ε`:
//!
//! ```text
//! φ⁺_i   = LSE_j (B_j + φ_j − C_ij)
//! ψ⁻_j   = −LSE_i (A_i − ψ_i − C_ij)
//! J(φ)   = Σ_j b_j φ_j − Σ_i a_i φ⁺_i
//! π_ij   = exp(A_i + B_j + φ_j − φ⁺_i − C_ij)
//! δJ(φ)  = b − π_Y
//! ```
//!
//! `δJ` is a vector of signed masses on the atoms of ν, so every ascent
//! method shares one representation of the first variation.

use std::ops::Deref;

use ndarray::Array2;

use crate::numeric::{self, logsumexp, Neumaier};
use crate::{Error, Instance, Result};

macro_rules! potential_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Wraps finite values.
            pub fn new(values: Vec<f64>) -> Result<Self> {
                if !numeric::all_finite(&values) {
                    return Err(Error::NonFinite(stringify!($name)));
                }
                Ok(Self(values))
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            /// `self + shift · 1`.
            pub fn shifted(&self, shift: f64) -> Self {
                Self(self.0.iter().map(|v| v + shift).collect())
            }

            pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
                Self(values)
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

potential_type!(
    /// A potential `φ` on the atoms of ν.
    Potential
);
potential_type!(
    /// A potential `ψ` on the atoms of μ.
    XPotential
);

impl Potential {
    /// Subtracts `φ[anchor]` from every entry.
    pub fn anchored(&self, anchor: usize) -> Self {
        self.shifted(-self.0[anchor])
    }
}

/// A joint distribution on the atoms of `μ ⊗ ν`, carried in log domain.
///
/// Zero masses are represented by `-inf` log masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    log_mass: Array2<f64>,
}

impl Coupling {
    pub fn from_log(log_mass: Array2<f64>) -> Result<Self> {
        if log_mass.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite("coupling log masses"));
        }
        Ok(Self { log_mass })
    }

    pub fn from_masses(masses: &Array2<f64>) -> Result<Self> {
        if masses.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Precondition(
                "coupling masses must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            log_mass: masses.mapv(f64::ln),
        })
    }

    pub fn log_masses(&self) -> &Array2<f64> {
        &self.log_mass
    }

    pub fn masses(&self) -> Array2<f64> {
        self.log_mass.mapv(f64::exp)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.log_mass.dim()
    }

    /// Row sums, by direct summation of masses.
    pub fn x_marginal(&self) -> Vec<f64> {
        self.log_mass
            .rows()
            .into_iter()
            .map(|r| numeric::sum(r.iter().map(|v| v.exp())))
            .collect()
    }

    /// Column sums, by direct summation of masses.
    pub fn y_marginal(&self) -> Vec<f64> {
        self.log_mass
            .columns()
            .into_iter()
            .map(|c| numeric::sum(c.iter().map(|v| v.exp())))
            .collect()
    }

    /// Log column sums via logsumexp.
    pub fn log_y_marginal(&self) -> Vec<f64> {
        self.log_mass
            .columns()
            .into_iter()
            .map(|c| logsumexp(c.iter().copied()))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        numeric::sum(self.log_mass.iter().map(|v| v.exp()))
    }

    /// Largest absolute difference of log masses (`inf` when supports differ).
    pub fn max_log_diff(&self, other: &Coupling) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.log_mass
            .iter()
            .zip(other.log_mass.iter())
            .fold(0.0_f64, |m, (x, y)| {
                if x == y {
                    m
                } else {
                    m.max((x - y).abs())
                }
            })
    }
}

fn check_len(values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: values.len(),
        });
    }
    Ok(())
}

/// `φ⁺_i = log Σ_j b_j exp(φ_j − c_ij/ε)`.
pub fn plus_transform(phi: &Potential, inst: &Instance) -> XPotential {
    assert_eq!(phi.len(), inst.m(), "potential length must equal m");
    let log_b = inst.log_b();
    let sc = inst.scaled_cost();
    let values = (0..inst.n())
        .map(|i| {
            let row = sc.row(i);
            logsumexp((0..inst.m()).map(|j| log_b[j] + phi[j] - row[j]))
        })
        .collect();
    XPotential::from_vec_unchecked(values)
}

/// `ψ⁻_j = −log Σ_i a_i exp(−ψ_i − c_ij/ε)`.
///
/// This is the transform for which Schrödinger potentials satisfy
/// `φ* = (ψ*)⁻` alongside `ψ* = (φ*)⁺`.
pub fn minus_transform(psi: &XPotential, inst: &Instance) -> Potential {
    assert_eq!(psi.len(), inst.n(), "potential length must equal n");
    let log_a = inst.log_a();
    let sc = inst.scaled_cost();
    let values = (0..inst.m())
        .map(|j| -logsumexp((0..inst.n()).map(|i| log_a[i] - psi[i] - sc[[i, j]])))
        .collect();
    Potential::from_vec_unchecked(values)
}

/// Everything one semi-dual evaluation produces, computed once.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub phi_plus: XPotential,
    /// `log π(φ)_Y`.
    pub log_marginal_y: Vec<f64>,
    /// `J(φ)`.
    pub value: f64,
}

impl Evaluation {
    pub fn marginal_y(&self) -> Vec<f64> {
        self.log_marginal_y.iter().map(|v| v.exp()).collect()
    }

    /// `δJ(φ) = b − π(φ)_Y`.
    pub fn first_variation(&self, inst: &Instance) -> Vec<f64> {
        inst.b()
            .iter()
            .zip(&self.log_marginal_y)
            .map(|(b, lp)| b - lp.exp())
            .collect()
    }

    /// `Σ_j |b_j − p_j|`.
    pub fn l1_residual(&self, inst: &Instance) -> f64 {
        numeric::sum(
            inst.b()
                .iter()
                .zip(&self.log_marginal_y)
                .map(|(b, lp)| (b - lp.exp()).abs()),
        )
    }
}

/// Computes `φ⁺`, `log π(φ)_Y` and `J(φ)` in one pass over the cost matrix.
pub fn evaluate(phi: &Potential, inst: &Instance) -> Evaluation {
    let phi_plus = plus_transform(phi, inst);
    let log_marginal_y = log_marginal_y_with(phi, &phi_plus, inst);
    let value = value_with(phi, &phi_plus, inst);
    Evaluation {
        phi_plus,
        log_marginal_y,
        value,
    }
}

fn value_with(phi: &Potential, phi_plus: &XPotential, inst: &Instance) -> f64 {
    let mut acc = Neumaier::default();
    for (b, p) in inst.b().iter().zip(phi.iter()) {
        acc.add(b * p);
    }
    for (a, q) in inst.a().iter().zip(phi_plus.iter()) {
        acc.add(-a * q);
    }
    acc.sum()
}

fn log_marginal_y_with(phi: &Potential, phi_plus: &XPotential, inst: &Instance) -> Vec<f64> {
    let log_a = inst.log_a();
    let log_b = inst.log_b();
    let sc = inst.scaled_cost();
    (0..inst.m())
        .map(|j| {
            log_b[j] + phi[j] + logsumexp((0..inst.n()).map(|i| log_a[i] - phi_plus[i] - sc[[i, j]]))
        })
        .collect()
}

/// `J(φ) = Σ_j b_j φ_j − Σ_i a_i φ⁺_i`.
pub fn semidual_value(phi: &Potential, inst: &Instance) -> f64 {
    let phi_plus = plus_transform(phi, inst);
    value_with(phi, &phi_plus, inst)
}

/// The full dual objective
/// `D(ψ, φ) = <φ, b> − <ψ, a> − log Σ_ij a_i b_j exp(φ_j − ψ_i − c_ij/ε)`.
pub fn dual_value(psi: &XPotential, phi: &Potential, inst: &Instance) -> f64 {
    let (log_a, log_b, sc) = (inst.log_a(), inst.log_b(), inst.scaled_cost());
    let n = inst.n();
    let m = inst.m();
    let log_mass = logsumexp(
        (0..n * m).map(|k| {
            let (i, j) = (k / m, k % m);
            log_a[i] + log_b[j] + phi[j] - psi[i] - sc[[i, j]]
        }),
    );
    numeric::dot(inst.b(), phi) - numeric::dot(inst.a(), psi) - log_mass
}

/// The Y-marginal `π(φ, φ⁺)_Y`, a probability vector on the atoms of ν.
pub fn marginal_y(phi: &Potential, inst: &Instance) -> Vec<f64> {
    let phi_plus = plus_transform(phi, inst);
    log_marginal_y_with(phi, &phi_plus, inst)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// `δJ(φ) = b − π(φ, φ⁺)_Y`; entries sum to zero.
pub fn first_variation(phi: &Potential, inst: &Instance) -> Vec<f64> {
    evaluate(phi, inst).first_variation(inst)
}

/// The coupling `π(φ, φ⁺)`; its X-marginal is `a`.
pub fn coupling(phi: &Potential, inst: &Instance) -> Coupling {
    let phi_plus = plus_transform(phi, inst);
    coupling_with(phi, &phi_plus, inst)
}

pub(crate) fn coupling_with(phi: &Potential, phi_plus: &XPotential, inst: &Instance) -> Coupling {
    let (log_a, log_b, sc) = (inst.log_a(), inst.log_b(), inst.scaled_cost());
    let log_mass = Array2::from_shape_fn((inst.n(), inst.m()), |(i, j)| {
        log_a[i] + log_b[j] + phi[j] - phi_plus[i] - sc[[i, j]]
    });
    Coupling { log_mass }
}

/// `log Z_ref = log Σ_ij a_i b_j exp(−c_ij/ε)`.
pub fn log_z_ref(inst: &Instance) -> f64 {
    let (log_a, log_b, sc) = (inst.log_a(), inst.log_b(), inst.scaled_cost());
    let m = inst.m();
    logsumexp((0..inst.n() * m).map(|k| {
        let (i, j) = (k / m, k % m);
        log_a[i] + log_b[j] - sc[[i, j]]
    }))
}

/// Log masses of the normalised reference `π_ref ∝ exp(−c/ε) a ⊗ b`.
pub fn log_reference(inst: &Instance) -> Array2<f64> {
    let lz = log_z_ref(inst);
    let (log_a, log_b, sc) = (inst.log_a(), inst.log_b(), inst.scaled_cost());
    Array2::from_shape_fn((inst.n(), inst.m()), |(i, j)| {
        log_a[i] + log_b[j] - sc[[i, j]] - lz
    })
}

/// `d_KL(π ‖ π_ref)`, the static Schrödinger bridge objective.
///
/// Returns `+inf` when `π` charges a cell where `π_ref` vanishes.
pub fn primal_value(pi: &Coupling, inst: &Instance) -> f64 {
    assert_eq!(pi.shape(), (inst.n(), inst.m()));
    let log_ref = log_reference(inst);
    let mut acc = Neumaier::default();
    for (lp, lr) in pi.log_masses().iter().zip(log_ref.iter()) {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        if *lr == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        acc.add(lp.exp() * (lp - lr));
    }
    acc.sum()
}

/// `Σ π c/ε + d_KL(π ‖ a ⊗ b)`: the primal objective of the problem with
/// cost `c/ε` and unit regularisation.
pub fn entropic_objective(pi: &Coupling, inst: &Instance) -> f64 {
    let (log_a, log_b, sc) = (inst.log_a(), inst.log_b(), inst.scaled_cost());
    let mut acc = Neumaier::default();
    for ((i, j), lp) in pi.log_masses().indexed_iter() {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        acc.add(lp.exp() * (sc[[i, j]] + lp - log_a[i] - log_b[j]));
    }
    acc.sum()
}

/// `J(φ̄) − J(φ) − <δJ(φ), φ̄ − φ>`, which is nonpositive by concavity.
pub fn bregman_gap(phi: &Potential, phi_bar: &Potential, inst: &Instance) -> f64 {
    let eval = evaluate(phi, inst);
    let grad = eval.first_variation(inst);
    let j_bar = semidual_value(phi_bar, inst);
    let mut acc = Neumaier::default();
    acc.add(j_bar);
    acc.add(-eval.value);
    for ((g, pb), p) in grad.iter().zip(phi_bar.iter()).zip(phi.iter()) {
        acc.add(-g * (pb - p));
    }
    acc.sum()
}

/// `E_{x∼μ} Var_{ρ_t(·; x)}[φ̄ − φ]`, where `ρ_t(·; x)` is the conditional
/// law of `y` given `x` under `π(φ + t(φ̄ − φ))`.
///
/// Integrating `−(1 − t)` times this over `[0, 1]` recovers
/// [`bregman_gap`], since it is minus the second derivative of `J` along
/// the segment.
pub fn mean_conditional_variance(phi: &Potential, phi_bar: &Potential, inst: &Instance, t: f64) -> f64 {
    let (log_b, sc) = (inst.log_b(), inst.scaled_cost());
    let d: Vec<f64> = phi_bar.iter().zip(phi.iter()).map(|(b, p)| b - p).collect();
    let phi_t: Vec<f64> = phi.iter().zip(&d).map(|(p, di)| p + t * di).collect();
    let mut acc = Neumaier::default();
    for i in 0..inst.n() {
        let logits: Vec<f64> = (0..inst.m()).map(|j| log_b[j] + phi_t[j] - sc[[i, j]]).collect();
        let lse = numeric::logsumexp_slice(&logits);
        let w: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        let mean = numeric::dot(&w, &d);
        let var = numeric::sum(w.iter().zip(&d).map(|(wj, dj)| wj * (dj - mean) * (dj - mean)));
        acc.add(inst.a()[i] * var);
    }
    acc.sum()
}

/// Checks lengths of an arbitrary mass vector against ν.
pub(crate) fn check_y_len(values: &[f64], inst: &Instance) -> Result<()> {
    check_len(values, inst.m())
}
