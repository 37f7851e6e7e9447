//! Kernels on the support of ν, mean embeddings and squared MMD.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::numeric::{self, Neumaier};
use crate::{Error, Result};

/// Kernel family and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `k(y, y') = 1` iff `y = y'`; realised as the identity Gram on the atoms.
    Identity,
    /// `exp(−‖y − y'‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `exp(−‖y − y'‖₁ / (2b))`
    Laplace { scale: f64 },
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        let bw = match self {
            KernelSpec::Identity => return Ok(()),
            KernelSpec::Gaussian { sigma } => *sigma,
            KernelSpec::Laplace { scale } => *scale,
        };
        if bw.is_finite() && bw > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("kernel bandwidth must be positive, got {bw}")))
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Identity => write!(f, "identity"),
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            KernelSpec::Laplace { scale } => write!(f, "laplace:{scale}"),
        }
    }
}

/// Parses `identity`, `gaussian:<sigma>` or `laplace:<scale>`.
impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bandwidth = |arg: Option<&str>| -> Result<f64> {
            let text = arg.ok_or_else(|| Error::Config(format!("kernel `{s}` needs a bandwidth")))?;
            text.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad kernel bandwidth `{text}`")))
        };
        let spec = match kind {
            "identity" if arg.is_none() => KernelSpec::Identity,
            "gaussian" => KernelSpec::Gaussian {
                sigma: bandwidth(arg)?,
            },
            "laplace" => KernelSpec::Laplace {
                scale: bandwidth(arg)?,
            },
            _ => return Err(Error::Config(format!("unknown kernel spec `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A symmetric Gram matrix over the atoms of ν together with
/// `c_k = max_j K_jj`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    matrix: Array2<f64>,
    c_k: f64,
}

impl Gram {
    /// Wraps an explicit symmetric matrix with positive diagonal.
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        let matrix = matrix.as_standard_layout().into_owned();
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, got: c });
        }
        for i in 0..r {
            if !(matrix[[i, i]] > 0.0) {
                return Err(Error::Config("Gram diagonal must be positive".into()));
            }
            for j in 0..i {
                if (matrix[[i, j]] - matrix[[j, i]]).abs() > 1e-12 {
                    return Err(Error::Config("Gram matrix is not symmetric".into()));
                }
            }
        }
        let c_k = (0..r).map(|i| matrix[[i, i]]).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { matrix, c_k })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            matrix: Array2::eye(m),
            c_k: 1.0,
        }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.indexed_iter().all(|((i, j), v)| *v == if i == j { 1.0 } else { 0.0 })
    }
}

/// Builds the Gram matrix of `spec` over the given `m × d` points.
pub fn gram(spec: &KernelSpec, points: ArrayView2<'_, f64>) -> Result<Gram> {
    spec.validate()?;
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel points"));
    }
    let m = points.nrows();
    let matrix = match *spec {
        KernelSpec::Identity => return Ok(Gram::identity(m)),
        KernelSpec::Gaussian { sigma } => {
            let denom = 2.0 * sigma * sigma;
            pairwise(points, |a, b| {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / denom).exp()
            })
        }
        KernelSpec::Laplace { scale } => pairwise(points, |a, b| {
            let d1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            (-d1 / (2.0 * scale)).exp()
        }),
    };
    Ok(Gram { matrix, c_k: 1.0 })
}

fn pairwise<F>(points: ArrayView2<'_, f64>, k: F) -> Array2<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let m = points.nrows();
    let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..=i {
            let v = k(&rows[i], &rows[j]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Median pairwise Euclidean distance between distinct atoms, used as the
/// default Gaussian bandwidth. Falls back to 1 when fewer than two atoms.
pub fn median_bandwidth(points: ArrayView2<'_, f64>) -> f64 {
    let m = points.nrows();
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in 0..i {
            let d2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d.push(d2.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// `(K ξ)_j`, the mean embedding of a mass vector.
pub fn mean_embedding(g: &Gram, xi: &[f64]) -> Vec<f64> {
    assert_eq!(xi.len(), g.len(), "mass vector length must match the Gram");
    g.matrix
        .rows()
        .into_iter()
        .map(|row| numeric::dot(row.as_slice().expect("standard layout"), xi))
        .collect()
}

/// `L_k(ξ, ρ) = ½ (ξ − ρ)ᵀ K (ξ − ρ)`, half the squared MMD.
///
/// Fails when the quadratic form is below `-1e-12`, which means the Gram
/// is not positive semidefinite.
pub fn mmd_sq(g: &Gram, xi: &[f64], rho: &[f64]) -> Result<f64> {
    if xi.len() != g.len() || rho.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: xi.len().max(rho.len()),
        });
    }
    let d: Vec<f64> = xi.iter().zip(rho).map(|(x, r)| x - r).collect();
    let q = quadratic_form(g, &d);
    if q < -1e-12 {
        return Err(Error::NotPositiveSemidefinite(q));
    }
    Ok(0.5 * q.max(0.0))
}

fn quadratic_form(g: &Gram, d: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for (i, row) in g.matrix.rows().into_iter().enumerate() {
        if d[i] == 0.0 {
            continue;
        }
        let mut inner = Neumaier::default();
        for (k, dk) in row.iter().zip(d) {
            inner.add(k * dk);
        }
        acc.add(d[i] * inner.sum());
    }
    acc.sum()
}
