//! A 1-D Schrödinger bridge with Brownian reference, driven by a semi-dual
//! potential.
//!
//! The reference process is `dX = σ dB` (no drift, diffusion `σ²`). Given a
//! terminal function `g_T`, the backward heat equation gives
//! `g_t(y) = E[g_T(X_T) | X_t = y]`, evaluated here as a grid convolution
//! in log domain. The twisted process
//!
//! ```text
//! dX = σ² ∇log g_t(X) dt + σ dB,   X_0 ~ μ
//! ```
//!
//! is simulated by Euler–Maruyama. With `c = ½|x − y|²` and `ε = σ² T` the
//! terminal law of the twisted process started from `μ` is the Y-marginal of
//! `π(φ)` once `g_T` is set from `φ` (see [`bridge_from_potential`]).

use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::measures::{grid_points, CostKind};
use crate::numeric::logsumexp;
use crate::{DiscreteMeasure, Error, Instance, Potential, Result};

/// Padding (in transition standard deviations) required between the
/// support of the measures and the edge of the spatial grid.
pub const PADDING_STDS: f64 = 6.0;

/// Equispaced space-time grid on `[x_lo, x_hi] × [0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    nodes: Vec<f64>,
    dx: f64,
    n_t: usize,
    horizon: f64,
    diffusion: f64,
}

impl SpaceTimeGrid {
    /// `n_x` space nodes on `[x_lo, x_hi]`, `n_t` time nodes on `[0, T]`.
    pub fn new(x_lo: f64, x_hi: f64, n_x: usize, horizon: f64, n_t: usize, diffusion: f64) -> Result<Self> {
        if !(x_lo < x_hi) || n_x < 2 {
            return Err(Error::Config("spatial grid needs lo < hi and at least two nodes".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) || n_t < 2 {
            return Err(Error::Config("time grid needs T > 0 and at least two nodes".into()));
        }
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(Error::Config(format!("diffusion must be positive, got {diffusion}")));
        }
        let nodes = grid_points(x_lo, x_hi, n_x);
        let dx = (x_hi - x_lo) / (n_x - 1) as f64;
        Ok(Self {
            nodes,
            dx,
            n_t,
            horizon,
            diffusion,
        })
    }

    /// Extends the `n_sub`-node grid on `[lo, hi]` at the same spacing by
    /// enough nodes on each side to cover [`PADDING_STDS`] standard
    /// deviations of the transition over `[0, T]`.
    pub fn padded(lo: f64, hi: f64, n_sub: usize, horizon: f64, n_t: usize, diffusion: f64) -> Result<Self> {
        if n_sub < 2 || !(lo < hi) {
            return Err(Error::Config("sub-grid needs lo < hi and at least two nodes".into()));
        }
        let dx = (hi - lo) / (n_sub - 1) as f64;
        let pad = (PADDING_STDS * (diffusion * horizon).sqrt() / dx).ceil() as usize;
        let x_lo = lo - pad as f64 * dx;
        let x_hi = hi + pad as f64 * dx;
        let mut grid = Self::new(x_lo, x_hi, n_sub + 2 * pad, horizon, n_t, diffusion)?;
        // Keep the sub-grid nodes bit-identical to `grid_points(lo, hi, n_sub)`.
        let sub = grid_points(lo, hi, n_sub);
        grid.nodes[pad..pad + n_sub].copy_from_slice(&sub);
        grid.dx = dx;
        Ok(grid)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_t - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| k as f64 * self.dt()).collect()
    }

    /// Index of the grid node at `x`, if `x` sits on one.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let k = ((x - self.nodes[0]) / self.dx).round();
        if k < 0.0 || k as usize >= self.nodes.len() {
            return None;
        }
        let k = k as usize;
        ((self.nodes[k] - x).abs() <= 1e-9 * self.dx.max(1.0)).then_some(k)
    }

    /// Checks that every point sits on a node at least [`PADDING_STDS`]
    /// transition deviations inside the grid.
    pub fn check_support(&self, points: &[f64]) -> Result<Vec<usize>> {
        let margin = PADDING_STDS * (self.diffusion * self.horizon).sqrt();
        let (lo, hi) = (self.nodes[0], *self.nodes.last().expect("non-empty grid"));
        points
            .iter()
            .map(|x| {
                let k = self
                    .node_index(*x)
                    .ok_or_else(|| Error::Precondition(format!("point {x} is not a grid node")))?;
                if x - lo < margin - 1e-9 || hi - x < margin - 1e-9 {
                    return Err(Error::Precondition(format!(
                        "point {x} lies within {margin} of the grid edge"
                    )));
                }
                Ok(k)
            })
            .collect()
    }
}

/// Log of the heat semigroup applied over a duration `tau`:
///
/// ```text
/// log g(y) = log Σ_x w(x, y) g_end(x),   w(x, y) ∝ exp(−(x − y)² / (2σ²τ))
/// ```
///
/// with the weights of each row normalised over the grid, so constants are
/// preserved exactly, edges included. Away from the edges the normaliser
/// equals the Riemann factor `Δx / √(2πσ²τ)` to within the Gaussian tail
/// beyond the padding.
///
/// `log_g_end` may hold `-inf` (zero mass). `tau = 0` returns the input
/// unchanged.
pub fn heat_step(log_g_end: &[f64], nodes: &[f64], tau: f64, diffusion: f64) -> Result<Vec<f64>> {
    if log_g_end.len() != nodes.len() {
        return Err(Error::DimensionMismatch {
            expected: nodes.len(),
            got: log_g_end.len(),
        });
    }
    if !(tau >= 0.0) {
        return Err(Error::Precondition(format!("propagation time must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(log_g_end.to_vec());
    }
    let var = diffusion * tau;
    let support: Vec<usize> = (0..nodes.len()).filter(|k| log_g_end[*k] > f64::NEG_INFINITY).collect();
    let log_kernel = |x: f64, y: f64| -(x - y) * (x - y) / (2.0 * var);
    Ok(nodes
        .iter()
        .map(|&y| {
            let log_norm = logsumexp(nodes.iter().map(|&x| log_kernel(x, y)));
            logsumexp(support.iter().map(|&k| log_g_end[k] + log_kernel(nodes[k], y))) - log_norm
        })
        .collect())
}

/// `log g_t` from the terminal `log g_T` on the grid, `0 ≤ t ≤ T`.
pub fn heat_propagate(log_g_terminal: &[f64], grid: &SpaceTimeGrid, t: f64) -> Result<Vec<f64>> {
    if !(0.0..=grid.horizon).contains(&t) {
        return Err(Error::Precondition(format!("time {t} outside [0, {}]", grid.horizon)));
    }
    heat_step(log_g_terminal, &grid.nodes, grid.horizon - t, grid.diffusion)
}

/// Drift values on the time nodes `t_0, …, t_{n_t − 2}` (the terminal node
/// is excluded, where `g_T` may vanish).
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    /// Rows are time nodes, columns are space nodes.
    pub values: Array2<f64>,
    pub nodes: Vec<f64>,
    pub dx: f64,
    pub dt: f64,
    pub diffusion: f64,
}

impl DriftField {
    pub fn n_steps(&self) -> usize {
        self.values.nrows()
    }

    /// Linear interpolation of row `k` at `x`, constant beyond the grid.
    pub fn at(&self, k: usize, x: f64) -> f64 {
        let row = self.values.row(k);
        let n = self.nodes.len();
        let s = (x - self.nodes[0]) / self.dx;
        if s <= 0.0 {
            return row[0];
        }
        if s >= (n - 1) as f64 {
            return row[n - 1];
        }
        let i = s.floor() as usize;
        let w = s - i as f64;
        (1.0 - w) * row[i] + w * row[i + 1]
    }

    /// CSV: a header `t\x,<space nodes>` followed by one row per time node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t\\x");
        for x in &self.nodes {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
        for (k, row) in self.values.rows().into_iter().enumerate() {
            let _ = write!(out, "{}", k as f64 * self.dt);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// `σ² ∂_x log g` by central differences, one-sided at the two ends.
pub fn drift_row(log_g: &[f64], dx: f64, diffusion: f64) -> Result<Vec<f64>> {
    let n = log_g.len();
    if n < 2 {
        return Err(Error::Config("drift needs at least two nodes".into()));
    }
    if log_g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("drift needs a strictly positive, finite g".into()));
    }
    Ok((0..n)
        .map(|i| {
            let d = if i == 0 {
                (log_g[1] - log_g[0]) / dx
            } else if i == n - 1 {
                (log_g[n - 1] - log_g[n - 2]) / dx
            } else {
                (log_g[i + 1] - log_g[i - 1]) / (2.0 * dx)
            };
            diffusion * d
        })
        .collect())
}

/// Drift field from `log g_t` sampled at the first `n_t − 1` time nodes.
pub fn drift_field(log_g: &[Vec<f64>], grid: &SpaceTimeGrid) -> Result<DriftField> {
    if log_g.len() + 1 != grid.n_t {
        return Err(Error::DimensionMismatch {
            expected: grid.n_t - 1,
            got: log_g.len(),
        });
    }
    let n_x = grid.nodes.len();
    let mut values = Array2::zeros((log_g.len(), n_x));
    for (k, lg) in log_g.iter().enumerate() {
        if lg.len() != n_x {
            return Err(Error::DimensionMismatch { expected: n_x, got: lg.len() });
        }
        let row = drift_row(lg, grid.dx, grid.diffusion)?;
        values.row_mut(k).assign(&ndarray::Array1::from(row));
    }
    Ok(DriftField {
        values,
        nodes: grid.nodes.clone(),
        dx: grid.dx,
        dt: grid.dt(),
        diffusion: grid.diffusion,
    })
}

/// Propagates `log g_T` to every non-terminal time node and differentiates.
pub fn drift_from_terminal(log_g_terminal: &[f64], grid: &SpaceTimeGrid) -> Result<DriftField> {
    let times = grid.times();
    let log_g = times[..times.len() - 1]
        .iter()
        .map(|t| heat_propagate(log_g_terminal, grid, *t))
        .collect::<Result<Vec<_>>>()?;
    drift_field(&log_g, grid)
}

/// Terminal condition carrying `φ` on the atoms of ν:
/// `log g_T(y_j) = φ_j + log(b_j / Δx)` and `-inf` off the support.
///
/// The density factor makes the twisted terminal law equal `π(φ)_Y` for
/// non-uniform ν.
pub fn terminal_log_condition(phi: &Potential, inst: &Instance, grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
    let ys = line_points(inst.nu())?;
    let idx = grid.check_support(&ys)?;
    let mut out = vec![f64::NEG_INFINITY; grid.nodes.len()];
    for (j, k) in idx.iter().enumerate() {
        out[*k] = phi[j] + inst.log_b()[j] - grid.dx.ln();
    }
    Ok(out)
}

fn line_points(m: &DiscreteMeasure) -> Result<Vec<f64>> {
    if m.dim() != 1 {
        return Err(Error::Precondition(format!("bridge needs 1-D measures, got dimension {}", m.dim())));
    }
    Ok(m.points().column(0).to_vec())
}

/// Drift of the bridge whose terminal condition is set by `φ`.
///
/// Requires `c = ½|x − y|²`, `ε = σ² T` and both measures on nodes of the
/// grid, well inside it.
pub fn bridge_from_potential(phi: &Potential, inst: &Instance, grid: &SpaceTimeGrid) -> Result<DriftField> {
    if !matches!(inst.cost_kind(), CostKind::HalfSqEuclidean) {
        return Err(Error::Precondition("bridge needs the half squared Euclidean cost".into()));
    }
    let expected = grid.diffusion * grid.horizon;
    if (inst.epsilon() - expected).abs() > 1e-12 * expected.max(1.0) {
        return Err(Error::Precondition(format!(
            "bridge needs ε = σ² T = {expected}, got {}",
            inst.epsilon()
        )));
    }
    if phi.len() != inst.m() {
        return Err(Error::DimensionMismatch {
            expected: inst.m(),
            got: phi.len(),
        });
    }
    grid.check_support(&line_points(inst.mu())?)?;
    let terminal = terminal_log_condition(phi, inst, grid)?;
    drift_from_terminal(&terminal, grid)
}

/// Terminal positions and boundary statistics of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub terminal: Vec<f64>,
    /// Particles pushed back after leaving the grid by more than one spacing.
    pub clamped: usize,
}

impl Simulation {
    pub fn clamp_fraction(&self) -> f64 {
        self.clamped as f64 / self.terminal.len().max(1) as f64
    }
}

/// Euler–Maruyama for `dX = v_t(X) dt + σ dB` from `X_0 ~ μ` (1-D).
///
/// Particle `k` draws from its own ChaCha8 stream `(seed, k)`, so results do
/// not depend on how particles are split across threads.
pub fn simulate_em(drift: &DriftField, mu: &DiscreteMeasure, n_particles: usize, seed: u64) -> Result<Simulation> {
    let starts = line_points(mu)?;
    let cdf: Vec<f64> = mu
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(16);
    let chunk = n_particles.div_ceil(threads.max(1)).max(1);
    let mut terminal = vec![0.0; n_particles];
    let mut clamped = 0;
    std::thread::scope(|scope| {
        let handles: Vec<_> = terminal
            .chunks_mut(chunk)
            .enumerate()
            .map(|(c, out)| {
                let (starts, cdf) = (&starts, &cdf);
                scope.spawn(move || {
                    let mut local = 0;
                    for (off, slot) in out.iter_mut().enumerate() {
                        let (x, hit) = particle(drift, starts, cdf, seed, (c * chunk + off) as u64);
                        *slot = x;
                        local += hit as usize;
                    }
                    local
                })
            })
            .collect();
        for h in handles {
            clamped += h.join().expect("simulation thread panicked");
        }
    });
    Ok(Simulation { terminal, clamped })
}

fn particle(drift: &DriftField, starts: &[f64], cdf: &[f64], seed: u64, index: u64) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    let atom = cdf.partition_point(|c| *c <= u).min(starts.len() - 1);
    let mut x = starts[atom];
    let sd = (drift.diffusion * drift.dt).sqrt();
    let lo = drift.nodes[0] - drift.dx;
    let hi = drift.nodes[drift.nodes.len() - 1] + drift.dx;
    let mut hit = false;
    for k in 0..drift.n_steps() {
        let z: f64 = rng.sample(StandardNormal);
        x += drift.at(k, x) * drift.dt + sd * z;
        if x < lo || x > hi {
            x = x.clamp(lo, hi);
            hit = true;
        }
    }
    (x, hit)
}

/// Normalised counts of samples at their nearest grid node.
pub fn nearest_node_histogram(samples: &[f64], nodes: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; nodes.len()];
    if samples.is_empty() {
        return counts;
    }
    let (x0, dx) = (nodes[0], nodes[1] - nodes[0]);
    for s in samples {
        let k = ((s - x0) / dx).round().clamp(0.0, (nodes.len() - 1) as f64) as usize;
        counts[k] += 1.0;
    }
    let n = samples.len() as f64;
    counts.iter().map(|c| c / n).collect()
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * crate::numeric::l1_distance(p, q)
}

/// `π(φ)_Y` spread onto the grid nodes.
pub fn static_marginal_on_grid(phi: &Potential, inst: &Instance, grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
    let idx = grid.check_support(&line_points(inst.nu())?)?;
    let p = crate::semidual::marginal_y(phi, inst);
    let mut out = vec![0.0; grid.nodes.len()];
    for (j, k) in idx.iter().enumerate() {
        out[*k] += p[j];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::make_grid_measure;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::padded(-1.0, 1.0, 33, 1.0, 101, 1.0).unwrap()
    }

    #[test]
    fn padding_covers_six_deviations() {
        let g = grid();
        assert!(g.nodes()[0] <= -1.0 - 6.0 + 1e-12);
        assert!(*g.nodes().last().unwrap() >= 1.0 + 6.0 - 1e-12);
        assert_eq!(g.check_support(&[-1.0, 0.0, 1.0]).unwrap().len(), 3);
        assert!(g.check_support(&[0.01]).is_err());
        assert!(g.check_support(&[g.nodes()[1]]).is_err());
    }

    #[test]
    fn terminal_time_returns_input() {
        let g = grid();
        let lg: Vec<f64> = g.nodes().iter().map(|x| -x * x).collect();
        assert_eq!(heat_propagate(&lg, &g, 1.0).unwrap(), lg);
        assert!(heat_propagate(&lg, &g, 1.5).is_err());
    }

    #[test]
    fn constants_are_preserved_and_have_no_drift() {
        let g = grid();
        let lg = vec![0.7; g.nodes().len()];
        let out = heat_propagate(&lg, &g, 0.3).unwrap();
        assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let field = drift_from_terminal(&lg, &g).unwrap();
        assert!(field.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn gaussian_terminal_matches_closed_form() {
        // g_T(x) = exp(−x²/2) ⇒ log g_t(x) = −x²/(2(1 + τ)) − ½ log(1 + τ)
        let g = grid();
        let lg: Vec<f64> = g.nodes().iter().map(|x| -x * x / 2.0).collect();
        let out = heat_propagate(&lg, &g, 0.4).unwrap();
        let tau = 0.6;
        for x in [-1.0, 0.0, 0.5, 1.0] {
            let k = g.node_index(x).unwrap();
            let want = -x * x / (2.0 * (1.0 + tau)) - 0.5 * (1.0f64 + tau).ln();
            assert!((out[k] - want).abs() < 1e-9, "{x}: {} vs {want}", out[k]);
        }
    }

    #[test]
    fn linear_log_gives_constant_drift() {
        let lg: Vec<f64> = (0..20).map(|i| 0.3 * i as f64 * 0.1).collect();
        let d = drift_row(&lg, 0.1, 1.0).unwrap();
        assert!(d.iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(drift_row(&[0.0, f64::NEG_INFINITY], 0.1, 1.0).is_err());
    }

    #[test]
    fn interpolation_and_clamping() {
        let field = DriftField {
            values: ndarray::array![[0.0, 1.0, 4.0]],
            nodes: vec![0.0, 1.0, 2.0],
            dx: 1.0,
            dt: 0.1,
            diffusion: 1.0,
        };
        assert_eq!(field.at(0, 0.5), 0.5);
        assert_eq!(field.at(0, 1.5), 2.5);
        assert_eq!(field.at(0, -3.0), 0.0);
        assert_eq!(field.at(0, 9.0), 4.0);
    }

    #[test]
    fn simulation_is_reproducible() {
        let g = SpaceTimeGrid::padded(-1.0, 1.0, 9, 0.2, 21, 1.0).unwrap();
        let mu = make_grid_measure(-1.0, 1.0, 9, |x| 1.0 + x * x).unwrap();
        let field = drift_from_terminal(&vec![0.0; g.nodes().len()], &g).unwrap();
        let a = simulate_em(&field, &mu, 500, 3).unwrap();
        let b = simulate_em(&field, &mu, 500, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_em(&field, &mu, 500, 4).unwrap());
    }

    #[test]
    fn histogram_and_tv() {
        let h = nearest_node_histogram(&[0.1, 0.9, 1.2, 5.0], &[0.0, 1.0, 2.0]);
        assert_eq!(h, vec![0.25, 0.5, 0.25]);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }
}
