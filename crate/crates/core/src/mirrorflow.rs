//! Accelerated mirror-descent flow on couplings.
//!
//! With `h = f₀ ⊕ g` and `π(h)` the inverse mirror map,
//!
//! ```text
//! π̂' = (r/t) (π(h) − π̂)
//! g'  = −(t/r) (π̂_Y − b)
//! ```
//!
//! integrated by classical RK4 from `t₀ > 0`. The functional
//!
//! ```text
//! V(t) = (t²/r) · ½‖π̂_Y − b‖² + r · d_KL(π* ‖ π(h))
//! ```
//!
//! is non-increasing along exact trajectories, which gives
//! `½‖π̂_Y − b‖² ≤ r V(t₀) / t²`.
//!
//! An auxiliary accumulator `A' = r t^{r−1} π(h)` with `A(t₀) = t₀^r π̂(t₀)`
//! is carried alongside, so that `π̂ = A / t^r` can be cross-checked: `π̂` is
//! the `r t^{r−1}`-weighted running average of the mirror points.

use ndarray::Array2;

use crate::diagnostics::coupling_kl;
use crate::numeric::{self, Neumaier};
use crate::primal::{mirror_bwd_with, DualPair};
use crate::semidual::{coupling, log_reference};
use crate::{Coupling, Error, Instance, Potential, Result, XPotential};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    /// Start time, which fixes the scale of the accumulator.
    pub t0: f64,
    /// Masses of the averaged coupling.
    pub pi_hat: Array2<f64>,
    pub g: Potential,
    pub f0: XPotential,
    /// `A / t₀^r`, where `A` is the running integral of `r τ^{r−1} π(h(τ))`
    /// started from `A(t₀) = t₀^r π̂(t₀)`.
    pub accumulator: Array2<f64>,
}

impl FlowState {
    /// `π̂_Y`.
    pub fn pi_hat_y(&self) -> Vec<f64> {
        self.pi_hat
            .columns()
            .into_iter()
            .map(|c| numeric::sum(c.iter().copied()))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        numeric::sum(self.pi_hat.iter().copied())
    }

    /// The mirror point `π(f₀ ⊕ g)`.
    pub fn mirror_point(&self, inst: &Instance) -> Coupling {
        mirror_bwd_with(&log_reference(inst), &self.h(), inst)
    }

    fn h(&self) -> Array2<f64> {
        DualPair::new(self.f0.clone(), self.g.clone()).to_matrix()
    }

    /// Largest relative gap between `π̂` and `A / t^r`.
    pub fn average_error(&self, r: f64) -> f64 {
        let scale = (self.t / self.t0).powf(r);
        let denom = numeric::max_abs(self.pi_hat.as_slice().expect("standard layout")).max(f64::MIN_POSITIVE);
        self.pi_hat
            .iter()
            .zip(self.accumulator.iter())
            .fold(0.0_f64, |m, (p, a)| m.max((p - a / scale).abs()))
            / denom
    }
}

/// `g = φ⁰`, `f₀ = 0`, `π̂ = π(φ⁰)`.
pub fn flow_init(phi0: &Potential, inst: &Instance, t0: f64) -> Result<FlowState> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::Config(format!("start time must be positive, got {t0}")));
    }
    if phi0.len() != inst.m() {
        return Err(Error::DimensionMismatch {
            expected: inst.m(),
            got: phi0.len(),
        });
    }
    let pi_hat = coupling(phi0, inst).masses();
    Ok(FlowState {
        t: t0,
        t0,
        accumulator: pi_hat.clone(),
        pi_hat,
        g: phi0.clone(),
        f0: XPotential::zeros(inst.n()),
    })
}

fn check_r(r: f64) -> Result<()> {
    if r >= 2.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("flow parameter r must be at least 2, got {r}")))
    }
}

/// Time derivative of `(π̂, g, A)`.
struct Rate {
    pi_hat: Array2<f64>,
    g: Vec<f64>,
    acc: Array2<f64>,
}

struct Rhs<'a> {
    inst: &'a Instance,
    log_ref: Array2<f64>,
    r: f64,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, t0: f64, pi_hat: &Array2<f64>, g: &[f64], f0: &[f64]) -> Rate {
        let h = Array2::from_shape_fn(pi_hat.dim(), |(i, j)| f0[i] + g[j]);
        let target = mirror_bwd_with(&self.log_ref, &h, self.inst).masses();
        let col: Vec<f64> = pi_hat
            .columns()
            .into_iter()
            .map(|c| numeric::sum(c.iter().copied()))
            .collect();
        let k = self.r / t;
        Rate {
            pi_hat: (&target - pi_hat) * k,
            g: col.iter().zip(self.inst.b()).map(|(p, b)| -(t / self.r) * (p - b)).collect(),
            acc: target * (self.r / t0 * (t / t0).powf(self.r - 1.0)),
        }
    }
}

fn advance(s: &FlowState, rate: &Rate, h: f64) -> (Array2<f64>, Vec<f64>) {
    let pi = &s.pi_hat + &(&rate.pi_hat * h);
    let g = s.g.iter().zip(&rate.g).map(|(v, d)| v + h * d).collect();
    (pi, g)
}

fn rk4(rhs: &Rhs<'_>, s: &FlowState, dt: f64) -> FlowState {
    let f0 = s.f0.values();
    let k1 = rhs.eval(s.t, s.t0, &s.pi_hat, &s.g, f0);
    let (p2, g2) = advance(s, &k1, 0.5 * dt);
    let k2 = rhs.eval(s.t + 0.5 * dt, s.t0, &p2, &g2, f0);
    let (p3, g3) = advance(s, &k2, 0.5 * dt);
    let k3 = rhs.eval(s.t + 0.5 * dt, s.t0, &p3, &g3, f0);
    let (p4, g4) = advance(s, &k3, dt);
    let k4 = rhs.eval(s.t + dt, s.t0, &p4, &g4, f0);

    let w = dt / 6.0;
    let combine = |a: &Array2<f64>, b: &Array2<f64>, c: &Array2<f64>, d: &Array2<f64>| {
        Array2::from_shape_fn(a.dim(), |ix| w * (a[ix] + 2.0 * b[ix] + 2.0 * c[ix] + d[ix]))
    };
    let pi_hat = &s.pi_hat + &combine(&k1.pi_hat, &k2.pi_hat, &k3.pi_hat, &k4.pi_hat);
    let accumulator = &s.accumulator + &combine(&k1.acc, &k2.acc, &k3.acc, &k4.acc);
    let g = (0..s.g.len())
        .map(|j| s.g[j] + w * (k1.g[j] + 2.0 * k2.g[j] + 2.0 * k3.g[j] + k4.g[j]))
        .collect();
    FlowState {
        t: s.t + dt,
        t0: s.t0,
        pi_hat,
        g: Potential::from_vec_unchecked(g),
        f0: s.f0.clone(),
        accumulator,
    }
}

/// One RK4 step of size `dt`.
pub fn flow_step(s: &FlowState, inst: &Instance, r: f64, dt: f64) -> Result<FlowState> {
    check_r(r)?;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let rhs = Rhs {
        inst,
        log_ref: log_reference(inst),
        r,
    };
    let next = rk4(&rhs, s, dt);
    ensure_finite(&next, s.t)?;
    Ok(next)
}

fn ensure_finite(s: &FlowState, last_t: f64) -> Result<()> {
    let finite = s.pi_hat.iter().all(|v| v.is_finite())
        && numeric::all_finite(&s.g)
        && s.accumulator.iter().all(|v| v.is_finite());
    if finite {
        Ok(())
    } else {
        Err(Error::BlowUp { last_t })
    }
}

/// `½ ‖π̂_Y − b‖²`.
pub fn flow_lk(s: &FlowState, inst: &Instance) -> f64 {
    let mut acc = Neumaier::default();
    for (p, b) in s.pi_hat_y().iter().zip(inst.b()) {
        acc.add((p - b) * (p - b));
    }
    0.5 * acc.sum()
}

/// `(t²/r) · ½‖π̂_Y − b‖² + r · d_KL(π* ‖ π(h))` with `π* = π(φ*)`.
pub fn lyapunov(s: &FlowState, inst: &Instance, r: f64, phi_star: &Potential) -> f64 {
    let pi_star = coupling(phi_star, inst);
    lyapunov_with(s, inst, r, &pi_star, &log_reference(inst))
}

fn lyapunov_with(s: &FlowState, inst: &Instance, r: f64, pi_star: &Coupling, log_ref: &Array2<f64>) -> f64 {
    let mirror = mirror_bwd_with(log_ref, &s.h(), inst);
    s.t * s.t / r * flow_lk(s, inst) + r * coupling_kl(pi_star, &mirror)
}

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    pub r: f64,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Record every this many steps (the final step is always recorded).
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            r: 2.0,
            t0: 0.01,
            t_end: 50.0,
            dt: 1e-3,
            record_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    pub t: f64,
    pub lk: f64,
    pub v: f64,
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub records: Vec<FlowRecord>,
    /// `d_KL(π* ‖ π(φ⁰))`.
    pub initial_divergence: f64,
    /// Largest `V(t_{k+1}) − V(t_k)` over all steps.
    pub worst_increase: f64,
    /// Largest `L(t) − (r²/t²) d₀ − t₀² L(t₀)/t²` over all steps.
    pub worst_rate_excess: f64,
    /// Largest relative gap between `π̂` and the running average.
    pub worst_average_error: f64,
    /// Largest `|Σ π̂ − 1|`.
    pub worst_mass_error: f64,
    pub final_state: FlowState,
}

impl FlowRun {
    pub fn v0(&self) -> f64 {
        self.records.first().map(|r| r.v).unwrap_or(0.0)
    }

    /// CSV with header `t,Lk,V`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,Lk,V\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.t, r.lk, r.v));
        }
        out
    }
}

/// Integrates from `t₀` to `t_end` and tracks every monitored quantity at
/// each step.
pub fn flow_run(inst: &Instance, phi0: &Potential, phi_star: &Potential, cfg: &FlowConfig) -> Result<FlowRun> {
    check_r(cfg.r)?;
    if !(cfg.dt > 0.0) || !(cfg.t_end > cfg.t0) {
        return Err(Error::Config("flow needs dt > 0 and t_end > t0".into()));
    }
    if cfg.record_every == 0 {
        return Err(Error::Config("record_every must be at least 1".into()));
    }
    let r = cfg.r;
    let log_ref = log_reference(inst);
    let rhs = Rhs {
        inst,
        log_ref: log_ref.clone(),
        r,
    };
    let pi_star = coupling(phi_star, inst);
    let d0 = coupling_kl(&pi_star, &coupling(phi0, inst));

    let mut s = flow_init(phi0, inst, cfg.t0)?;
    let l0 = flow_lk(&s, inst);
    let mut v_prev = lyapunov_with(&s, inst, r, &pi_star, &log_ref);
    let mut records = vec![FlowRecord { t: s.t, lk: l0, v: v_prev }];
    let steps = ((cfg.t_end - cfg.t0) / cfg.dt).round() as usize;
    let (mut worst_increase, mut worst_rate, mut worst_avg, mut worst_mass) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0_f64, 0.0_f64);

    for k in 1..=steps {
        let next = rk4(&rhs, &s, cfg.dt);
        ensure_finite(&next, s.t)?;
        // Time from the step count rather than accumulated additions.
        s = FlowState {
            t: cfg.t0 + k as f64 * cfg.dt,
            ..next
        };
        let lk = flow_lk(&s, inst);
        let v = lyapunov_with(&s, inst, r, &pi_star, &log_ref);
        worst_increase = worst_increase.max(v - v_prev);
        let t2 = s.t * s.t;
        worst_rate = worst_rate.max(lk - r * r * d0 / t2 - cfg.t0 * cfg.t0 * l0 / t2);
        worst_avg = worst_avg.max(s.average_error(r));
        worst_mass = worst_mass.max((s.total_mass() - 1.0).abs());
        v_prev = v;
        if k % cfg.record_every == 0 || k == steps {
            records.push(FlowRecord { t: s.t, lk, v });
        }
    }
    Ok(FlowRun {
        records,
        initial_divergence: d0,
        worst_increase,
        worst_rate_excess: worst_rate,
        worst_average_error: worst_avg,
        worst_mass_error: worst_mass,
        final_state: s,
    })
}
