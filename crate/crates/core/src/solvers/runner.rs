use std::time::Instant;

use super::{
    auto_eta_ksga, default_b, lambda_bound, phi_match_from, proj_sga_from, sign_sga_from, t_next, PhiOperator,
    Trace, TraceRecord,
};
use crate::diagnostics::kl;
use crate::kernels::{mmd_sq, Gram};
use crate::semidual::{evaluate, Evaluation};
use crate::{Error, Instance, Potential, Result};

/// Largest decrease of `J` tolerated on a method with guaranteed ascent.
pub const DIVERGENCE_TOL: f64 = 1e-6;

/// Which update the runner applies.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    PhiMatch(PhiOperator),
    SignSga,
    ProjSga,
    /// Projected ascent with FISTA momentum.
    ProjSgaPp,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::PhiMatch(op) => format!("phi_match:{}", op.name()),
            Method::SignSga => "sign_sga".into(),
            Method::ProjSga => "proj_sga".into(),
            Method::ProjSgaPp => "proj_sga_pp".into(),
        }
    }

    fn is_projected(&self) -> bool {
        matches!(self, Method::ProjSga | Method::ProjSgaPp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Auto,
    Explicit(f64),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub eta: StepSize,
    pub max_iter: usize,
    /// Stop once `Σ|b − p| ≤ tol_l1`.
    pub tol_l1: f64,
    /// Pinned atom for sign ascent; defaults to the heaviest atom of ν.
    pub anchor: Option<usize>,
    /// Box radius for the projected methods; defaults to `1.5 · max|c|`.
    pub bound: Option<f64>,
    pub record_every: usize,
    /// Gram used for the `mmd_sq` column. Kernel-smoothed runs fall back to
    /// their own Gram when this is unset.
    pub gram: Option<Gram>,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            eta: StepSize::Auto,
            max_iter: 1000,
            tol_l1: 1e-10,
            anchor: None,
            bound: None,
            record_every: 1,
            gram: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Final potential (`φ̄ᴺ` for the accelerated method).
    pub potential: Potential,
    pub trace: Trace,
    pub converged: bool,
    pub iterations: usize,
    pub eta: f64,
    pub bound: Option<f64>,
    pub anchor: Option<usize>,
    pub final_value: f64,
    pub final_residual: f64,
}

struct Resolved {
    eta: f64,
    bound: Option<f64>,
    anchor: Option<usize>,
    gram: Option<Gram>,
    guarded: bool,
}

fn resolve(inst: &Instance, cfg: &SolverConfig) -> Result<Resolved> {
    if !(cfg.tol_l1 >= 0.0) {
        return Err(Error::Config(format!("tolerance must be nonnegative, got {}", cfg.tol_l1)));
    }
    if cfg.record_every == 0 {
        return Err(Error::Config("record_every must be at least 1".into()));
    }
    let explicit = match cfg.eta {
        StepSize::Auto => None,
        StepSize::Explicit(e) if e.is_finite() && e > 0.0 => Some(e),
        StepSize::Explicit(e) => return Err(Error::Config(format!("step size must be positive, got {e}"))),
    };
    let bound = if cfg.method.is_projected() {
        let b = cfg.bound.unwrap_or_else(|| default_b(inst));
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::Config(format!("B must be a nonnegative number, got {b}")));
        }
        Some(b)
    } else {
        None
    };
    let anchor = match cfg.method {
        Method::SignSga => {
            let a = cfg.anchor.unwrap_or_else(|| inst.nu().heaviest_atom());
            if a >= inst.m() {
                return Err(Error::Config(format!("anchor {a} out of range for {} atoms", inst.m())));
            }
            Some(a)
        }
        _ => None,
    };
    let mut gram = cfg.gram.clone();
    if let Method::PhiMatch(PhiOperator::ExpKernel(g)) = &cfg.method {
        if g.len() != inst.m() {
            return Err(Error::DimensionMismatch {
                expected: inst.m(),
                got: g.len(),
            });
        }
        gram.get_or_insert_with(|| g.clone());
    }
    if let Some(g) = &gram {
        if g.len() != inst.m() {
            return Err(Error::DimensionMismatch {
                expected: inst.m(),
                got: g.len(),
            });
        }
    }

    let (eta, guarded) = match &cfg.method {
        Method::PhiMatch(op) => {
            let auto = match op {
                PhiOperator::Identity => 1.0,
                PhiOperator::Exp => 0.5,
                PhiOperator::ExpKernel(g) => auto_eta_ksga(g),
                PhiOperator::ChiSquare => 0.5,
            };
            let eta = explicit.unwrap_or(auto);
            if eta > 1.0 {
                return Err(Error::Config(format!("Φ-match step must lie in (0, 1], got {eta}")));
            }
            let guarded = match op {
                PhiOperator::Identity => eta == 1.0,
                PhiOperator::Exp => true,
                _ => false,
            };
            (eta, guarded)
        }
        Method::SignSga => {
            let eta = explicit.unwrap_or(1.0);
            if eta >= 2.0 {
                return Err(Error::Config(format!("sign ascent step must lie in (0, 2), got {eta}")));
            }
            (eta, true)
        }
        Method::ProjSga | Method::ProjSgaPp => {
            let b = bound.expect("projected methods resolve a bound");
            let radius = if cfg.method == Method::ProjSga { b } else { 3.0 * b };
            let safe = (-lambda_bound(inst, radius)?).exp();
            let eta = explicit.unwrap_or(safe);
            (eta, cfg.method == Method::ProjSga && eta <= safe)
        }
    };
    Ok(Resolved {
        eta,
        bound,
        anchor,
        gram,
        guarded,
    })
}

/// Runs the configured method from `phi0` until the L¹ residual drops to
/// `tol_l1` or `max_iter` steps have been taken.
///
/// Iteration 0, every `record_every`-th iteration and the last one are
/// recorded. Methods with a guaranteed ascent property (Sinkhorn, gradient
/// ascent with `η < 2`, sign ascent, projected ascent at the safe step)
/// abort with [`Error::Divergence`] if `J` drops by more than
/// [`DIVERGENCE_TOL`].
///
/// The accelerated method starts from `φ¹ = φ̄⁰ = phi0`, `t₁ = 1`, and
/// iterates
///
/// ```text
/// φ̄ⁿ    = proj(φⁿ)
/// tₙ₊₁   = (1 + √(1 + 4tₙ²)) / 2
/// φⁿ⁺¹  = φ̄ⁿ + ((tₙ − 1)/tₙ₊₁)(φ̄ⁿ − φ̄ⁿ⁻¹)
/// ```
///
/// recording `J(φ̄ⁿ)`.
pub fn run(inst: &Instance, cfg: &SolverConfig, phi0: &Potential) -> Result<RunOutcome> {
    if phi0.len() != inst.m() {
        return Err(Error::DimensionMismatch {
            expected: inst.m(),
            got: phi0.len(),
        });
    }
    let res = resolve(inst, cfg)?;
    if let Some(b) = res.bound {
        if let Some(v) = phi0.iter().find(|v| v.abs() > b) {
            return Err(Error::Precondition(format!(
                "initial potential entry {v} lies outside [−{b}, {b}]"
            )));
        }
    }
    let mut rec = Recorder {
        inst,
        gram: res.gram.as_ref(),
        start: Instant::now(),
        trace: Trace::new(),
    };

    let (potential, eval, iterations) = match &cfg.method {
        Method::ProjSgaPp => accelerated(inst, cfg, &res, phi0, &mut rec)?,
        method => plain(inst, cfg, method, &res, phi0, &mut rec)?,
    };
    let final_residual = eval.l1_residual(inst);
    Ok(RunOutcome {
        potential,
        trace: rec.trace,
        converged: final_residual <= cfg.tol_l1,
        iterations,
        eta: res.eta,
        bound: res.bound,
        anchor: res.anchor,
        final_value: eval.value,
        final_residual,
    })
}

struct Recorder<'a> {
    inst: &'a Instance,
    gram: Option<&'a Gram>,
    start: Instant,
    trace: Trace,
}

impl Recorder<'_> {
    fn record(&mut self, iteration: usize, eval: &Evaluation) -> Result<()> {
        let p = eval.marginal_y();
        let b = self.inst.b();
        let mmd = match self.gram {
            Some(g) => Some(mmd_sq(g, &p, b)?),
            None => None,
        };
        self.trace.push(TraceRecord {
            iteration,
            value: eval.value,
            l1_residual: eval.l1_residual(self.inst),
            mmd_sq: mmd,
            kl_y: kl(&p, b),
            elapsed_s: self.start.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

fn should_record(n: usize, cfg: &SolverConfig, done: bool) -> bool {
    done || n.is_multiple_of(cfg.record_every) || n == cfg.max_iter
}

fn plain(
    inst: &Instance,
    cfg: &SolverConfig,
    method: &Method,
    res: &Resolved,
    phi0: &Potential,
    rec: &mut Recorder<'_>,
) -> Result<(Potential, Evaluation, usize)> {
    let mut phi = phi0.clone();
    let mut eval = evaluate(&phi, inst);
    rec.record(0, &eval)?;
    let mut n = 0;
    let mut done = eval.l1_residual(inst) <= cfg.tol_l1;
    while !done && n < cfg.max_iter {
        let next = match method {
            Method::PhiMatch(op) => phi_match_from(&phi, &eval, inst, op, res.eta)?,
            Method::SignSga => sign_sga_from(&phi, &eval, inst, res.eta, res.anchor.expect("resolved anchor")),
            Method::ProjSga => proj_sga_from(&phi, &eval, inst, res.bound.expect("resolved bound"), res.eta),
            Method::ProjSgaPp => unreachable!("handled by the accelerated loop"),
        };
        let next_eval = evaluate(&next, inst);
        n += 1;
        let drop = eval.value - next_eval.value;
        if res.guarded && drop > DIVERGENCE_TOL {
            return Err(Error::Divergence { iteration: n, drop });
        }
        phi = next;
        eval = next_eval;
        done = eval.l1_residual(inst) <= cfg.tol_l1;
        if should_record(n, cfg, done) {
            rec.record(n, &eval)?;
        }
    }
    Ok((phi, eval, n))
}

fn accelerated(
    inst: &Instance,
    cfg: &SolverConfig,
    res: &Resolved,
    phi0: &Potential,
    rec: &mut Recorder<'_>,
) -> Result<(Potential, Evaluation, usize)> {
    let bound = res.bound.expect("resolved bound");
    let mut bar_prev = phi0.clone();
    let mut bar_eval = evaluate(&bar_prev, inst);
    rec.record(0, &bar_eval)?;
    let mut y = phi0.clone();
    let mut t = 1.0;
    let mut n = 0;
    let mut done = bar_eval.l1_residual(inst) <= cfg.tol_l1;
    while !done && n < cfg.max_iter {
        n += 1;
        let y_eval = evaluate(&y, inst);
        let bar = proj_sga_from(&y, &y_eval, inst, bound, res.eta);
        let t_new = t_next(t);
        let beta = (t - 1.0) / t_new;
        let extrapolated = bar
            .iter()
            .zip(bar_prev.iter())
            .map(|(cur, prev)| cur + beta * (cur - prev))
            .collect();
        y = Potential::from_vec_unchecked(extrapolated);
        t = t_new;
        bar_eval = evaluate(&bar, inst);
        bar_prev = bar;
        done = bar_eval.l1_residual(inst) <= cfg.tol_l1;
        if should_record(n, cfg, done) {
            rec.record(n, &bar_eval)?;
        }
    }
    Ok((bar_prev, bar_eval, n))
}
