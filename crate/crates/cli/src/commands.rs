//! One function per subcommand.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use eot_core::bridge::{self, SpaceTimeGrid};
use eot_core::diagnostics::{check_ksga_rate, check_proj_sga_pp_rate, check_proj_sga_rate, BoundReport};
use eot_core::kernels::{gram, median_bandwidth, Gram, KernelSpec};
use eot_core::measures::{load_instance, make_grid_measure};
use eot_core::mirrorflow::{flow_run, FlowConfig};
use eot_core::solvers::{oracle_solve, oracle_solve_with, run, Method, PhiOperator, SolverConfig, StepSize, DEFAULT_ORACLE_TOL};
use eot_core::verify::{run_suite, PROPERTIES};
use eot_core::{CostKind, Error, Instance, Potential};
use serde::Serialize;

use crate::output::{emit, to_json, write_atomic};
use crate::{BridgeArgs, FlowArgs, MethodName, OracleArgs, PotentialChoice, SolveArgs, ValidateArgs, VerifyArgs};

/// Finished, but the target was not met.
const NOT_MET: u8 = 2;

fn parse_auto<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Option<T>> {
    if text == "auto" {
        return Ok(None);
    }
    text.parse()
        .map(Some)
        .map_err(|_| anyhow::anyhow!("--{flag} expects `auto` or a number, got `{text}`"))
}

fn load(path: &Path) -> Result<Instance> {
    load_instance(path).with_context(|| format!("loading {}", path.display()))
}

fn nu_gram(spec: Option<&str>, inst: &Instance) -> Result<Option<Gram>> {
    let points = inst.nu().points().view();
    Ok(match spec {
        Some(s) => Some(gram(&s.parse::<KernelSpec>()?, points)?),
        None => None,
    })
}

fn build_config(args: &SolveArgs, inst: &Instance) -> Result<SolverConfig> {
    let eta: Option<f64> = parse_auto("eta", &args.eta)?;
    let bound: Option<f64> = parse_auto("B", &args.bound)?;
    let anchor: Option<usize> = parse_auto("anchor", &args.anchor)?;
    let mut gram_for_mmd = nu_gram(args.kernel.as_deref(), inst)?;
    let method = match args.method {
        MethodName::Sinkhorn => {
            if eta.is_some_and(|e| e != 1.0) {
                bail!("sinkhorn runs at η = 1; use eta_sinkhorn for other steps");
            }
            Method::PhiMatch(PhiOperator::Identity)
        }
        MethodName::EtaSinkhorn => Method::PhiMatch(PhiOperator::Identity),
        MethodName::Sga => Method::PhiMatch(PhiOperator::Exp),
        MethodName::Chi2 => Method::PhiMatch(PhiOperator::ChiSquare),
        MethodName::Ksga => {
            let g = match gram_for_mmd.take() {
                Some(g) => g,
                None => {
                    let sigma = median_bandwidth(inst.nu().points().view());
                    gram(&KernelSpec::Gaussian { sigma }, inst.nu().points().view())?
                }
            };
            Method::PhiMatch(PhiOperator::ExpKernel(g))
        }
        MethodName::SignSga => Method::SignSga,
        MethodName::ProjSga => Method::ProjSga,
        MethodName::ProjSgaPp => Method::ProjSgaPp,
    };
    if anchor.is_some() && method != Method::SignSga {
        bail!("--anchor only applies to sign_sga");
    }
    if bound.is_some() && !matches!(method, Method::ProjSga | Method::ProjSgaPp) {
        bail!("--B only applies to proj_sga and proj_sga_pp");
    }
    if let Some(a) = anchor {
        if a >= inst.m() {
            bail!("anchor {a} out of range for {} atoms", inst.m());
        }
    }
    let mut cfg = SolverConfig::new(method);
    cfg.eta = eta.map_or(StepSize::Auto, StepSize::Explicit);
    cfg.max_iter = args.max_iter;
    cfg.tol_l1 = args.tol;
    cfg.anchor = anchor;
    cfg.bound = bound;
    cfg.record_every = args.record_every;
    cfg.gram = gram_for_mmd;
    Ok(cfg)
}

#[derive(Serialize)]
struct SolveSummary {
    instance_digest: String,
    method: String,
    eta: f64,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    anchor: Option<usize>,
    iterations: usize,
    converged: bool,
    final_j: f64,
    final_l1_residual: f64,
    bounds: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

pub fn solve(args: &SolveArgs) -> Result<u8> {
    let start = Instant::now();
    let inst = load(&args.instance)?;
    let cfg = build_config(args, &inst)?;
    let phi0 = Potential::zeros(inst.m());
    let out = run(&inst, &cfg, &phi0)?;

    let mut bounds = Vec::new();
    if args.bounds {
        let phi_star = oracle_solve(&inst, DEFAULT_ORACLE_TOL).context("reference solve for --bounds")?;
        match &cfg.method {
            Method::PhiMatch(PhiOperator::ExpKernel(g)) => {
                bounds.push(check_ksga_rate(&out.trace, &inst, g, &phi0, &phi_star)?)
            }
            Method::ProjSga => bounds.push(check_proj_sga_rate(
                &out.trace,
                &inst,
                out.bound.expect("projected runs resolve B"),
                &phi0,
                &phi_star,
            )?),
            Method::ProjSgaPp => bounds.push(check_proj_sga_pp_rate(
                &out.trace,
                &inst,
                out.bound.expect("projected runs resolve B"),
                &phi0,
                &phi_star,
            )?),
            _ => eprintln!("note: {} has no rate bound to check", cfg.method.name()),
        }
    }

    let summary = SolveSummary {
        instance_digest: inst.digest(),
        method: cfg.method.name(),
        eta: out.eta,
        bound: out.bound,
        anchor: out.anchor,
        iterations: out.iterations,
        converged: out.converged,
        final_j: out.final_value,
        final_l1_residual: out.final_residual,
        bounds,
        wall_time_s: args.timing.then(|| start.elapsed().as_secs_f64()),
    };
    if let Some(path) = &args.trace {
        write_atomic(path, &out.trace.to_csv(args.timing))?;
    }
    emit(args.summary.as_deref(), &to_json(&summary))?;
    if !out.converged {
        eprintln!(
            "not converged after {} iterations (residual {:e})",
            out.iterations, out.final_residual
        );
        return Ok(NOT_MET);
    }
    Ok(0)
}

#[derive(Serialize)]
struct OracleOutput {
    instance_digest: String,
    residual: f64,
    iterations: usize,
    phi: Vec<f64>,
}

pub fn oracle(args: &OracleArgs) -> Result<u8> {
    let inst = load(&args.instance)?;
    let sol = match oracle_solve_with(&inst, args.tol, args.max_iter) {
        Ok(s) => s,
        Err(e @ Error::OracleNotConverged { .. }) => {
            eprintln!("{e}");
            return Ok(NOT_MET);
        }
        Err(e) => return Err(e.into()),
    };
    let doc = to_json(&OracleOutput {
        instance_digest: inst.digest(),
        residual: sol.residual,
        iterations: sol.iterations,
        phi: sol.potential.into_inner(),
    });
    if let Some(path) = &args.output {
        write_atomic(path, &doc)?;
    }
    if args.summary.is_some() || args.output.is_none() {
        emit(args.summary.as_deref(), &doc)?;
    }
    Ok(0)
}

pub fn verify(args: &VerifyArgs) -> Result<u8> {
    if args.list {
        for name in PROPERTIES {
            println!("{name}");
        }
        return Ok(0);
    }
    let only = (!args.only.is_empty()).then_some(args.only.as_slice());
    let report = run_suite(args.seed, only)?;
    emit(args.report.as_deref(), &report.to_json())?;
    for p in report.properties.iter().filter(|p| !p.passed) {
        eprintln!("FAIL {} (margin {:e}): {}", p.name, p.worst_margin, p.detail);
    }
    Ok(if report.passed { 0 } else { NOT_MET })
}

/// Two-bump demo: μ left of centre, ν right of centre, ε = 1.
fn demo_bridge_instance() -> Result<Instance> {
    let mu = make_grid_measure(-1.0, 1.0, 64, |x| (-(x + 0.3) * (x + 0.3) / 0.08).exp() + 0.05)?;
    let nu = make_grid_measure(-1.0, 1.0, 64, |x| (-(x - 0.4) * (x - 0.4) / 0.05).exp() + 0.05)?;
    Ok(Instance::new(mu, nu, CostKind::HalfSqEuclidean, 1.0)?)
}

/// The smallest equally spaced grid containing every atom of both measures.
fn grid_for(inst: &Instance, n_t: usize) -> Result<SpaceTimeGrid> {
    if inst.mu().dim() != 1 || inst.nu().dim() != 1 {
        bail!("bridge needs 1-D measures");
    }
    let mut xs: Vec<f64> = inst.mu().points().iter().chain(inst.nu().points().iter()).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        bail!("bridge needs at least two distinct support points");
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let dx = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let n_sub = ((hi - lo) / dx).round() as usize + 1;
    // T = 1, so the reference diffusion equals ε.
    Ok(SpaceTimeGrid::padded(lo, hi, n_sub, 1.0, n_t, inst.epsilon())?)
}

#[derive(Serialize)]
struct BridgeSummary {
    instance_digest: String,
    potential: &'static str,
    grid_nodes: usize,
    dx: f64,
    time_nodes: usize,
    particles: usize,
    seed: u64,
    clamp_fraction: f64,
    total_variation: f64,
    tv_tolerance: f64,
    passed: bool,
}

pub fn bridge(args: &BridgeArgs) -> Result<u8> {
    let inst = match &args.instance {
        Some(p) => load(p)?,
        None => demo_bridge_instance()?,
    };
    if args.particles == 0 {
        bail!("--particles must be positive");
    }
    let grid = grid_for(&inst, args.n_t)?;
    let (phi, label) = match args.potential {
        PotentialChoice::Zero | PotentialChoice::Constant => (Potential::zeros(inst.m()), "zero"),
        PotentialChoice::Oracle => (oracle_solve(&inst, DEFAULT_ORACLE_TOL)?, "oracle"),
    };
    let (drift, target) = if args.potential == PotentialChoice::Constant {
        let drift = bridge::drift_from_terminal(&vec![0.0; grid.nodes().len()], &grid)?;
        // Unconditioned Brownian motion: the terminal law is μ ∗ N(0, ε).
        let mut target = vec![0.0; grid.nodes().len()];
        let var = grid.diffusion() * grid.horizon();
        for (x, a) in inst.mu().points().iter().zip(inst.mu().weights()) {
            let w: Vec<f64> = grid.nodes().iter().map(|y| (-(y - x) * (y - x) / (2.0 * var)).exp()).collect();
            let total: f64 = w.iter().sum();
            for (t, wi) in target.iter_mut().zip(&w) {
                *t += a * wi / total;
            }
        }
        (drift, target)
    } else {
        (
            bridge::bridge_from_potential(&phi, &inst, &grid)?,
            bridge::static_marginal_on_grid(&phi, &inst, &grid)?,
        )
    };
    let sim = bridge::simulate_em(&drift, inst.mu(), args.particles, args.seed)?;
    let hist = bridge::nearest_node_histogram(&sim.terminal, grid.nodes());
    let tv = bridge::total_variation(&hist, &target);
    let tol = 3.0 / (args.particles as f64).sqrt() + 2.0 * grid.dx();

    if let Some(path) = &args.drift {
        write_atomic(path, &drift.to_csv())?;
    }
    if let Some(path) = &args.trace {
        let mut csv = String::from("x,simulated,static\n");
        for ((x, h), t) in grid.nodes().iter().zip(&hist).zip(&target) {
            csv.push_str(&format!("{x},{h},{t}\n"));
        }
        write_atomic(path, &csv)?;
    }
    let summary = BridgeSummary {
        instance_digest: inst.digest(),
        potential: if args.potential == PotentialChoice::Constant { "constant" } else { label },
        grid_nodes: grid.nodes().len(),
        dx: grid.dx(),
        time_nodes: grid.n_t(),
        particles: args.particles,
        seed: args.seed,
        clamp_fraction: sim.clamp_fraction(),
        total_variation: tv,
        tv_tolerance: tol,
        passed: tv <= tol,
    };
    emit(args.summary.as_deref(), &to_json(&summary))?;
    Ok(if summary.passed { 0 } else { NOT_MET })
}

#[derive(Serialize)]
struct FlowSummary {
    instance_digest: String,
    r: f64,
    t0: f64,
    t_end: f64,
    dt: f64,
    initial_divergence: f64,
    final_lk: f64,
    final_v: f64,
    worst_v_increase: f64,
    worst_rate_excess: f64,
    worst_average_error: f64,
    worst_mass_error: f64,
}

pub fn flow(args: &FlowArgs) -> Result<u8> {
    let inst = load(&args.instance)?;
    let cfg = FlowConfig {
        r: args.r,
        t0: args.t0,
        t_end: args.t_end,
        dt: args.dt,
        record_every: args.record_every,
    };
    let phi_star = oracle_solve(&inst, DEFAULT_ORACLE_TOL)?;
    let out = flow_run(&inst, &Potential::zeros(inst.m()), &phi_star, &cfg)?;
    if let Some(path) = &args.trace {
        write_atomic(path, &out.to_csv())?;
    }
    let last = out.records.last().copied().expect("flow records its last step");
    let summary = FlowSummary {
        instance_digest: inst.digest(),
        r: cfg.r,
        t0: cfg.t0,
        t_end: cfg.t_end,
        dt: cfg.dt,
        initial_divergence: out.initial_divergence,
        final_lk: last.lk,
        final_v: last.v,
        worst_v_increase: out.worst_increase,
        worst_rate_excess: out.worst_rate_excess,
        worst_average_error: out.worst_average_error,
        worst_mass_error: out.worst_mass_error,
    };
    emit(args.summary.as_deref(), &to_json(&summary))?;
    Ok(0)
}

#[derive(Serialize)]
struct ValidateSummary {
    instance_digest: String,
    n: usize,
    m: usize,
    dim: usize,
    cost: &'static str,
    epsilon: f64,
    max_abs_cost: f64,
}

pub fn validate(args: &ValidateArgs) -> Result<u8> {
    let inst = load(&args.instance)?;
    let summary = ValidateSummary {
        instance_digest: inst.digest(),
        n: inst.n(),
        m: inst.m(),
        dim: inst.mu().dim(),
        cost: inst.cost_kind().name(),
        epsilon: inst.epsilon(),
        max_abs_cost: inst.max_abs_cost(),
    };
    print!("{}", to_json(&summary));
    Ok(0)
}
