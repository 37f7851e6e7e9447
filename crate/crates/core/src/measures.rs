//! Discrete measures, problem instances and the instance file format.
//!
//! Every continuous marginal is carried as a weighted point cloud; densities
//! become masses with respect to counting measure. Zero-mass atoms are
//! rejected because every log-domain formula divides by the weights.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numeric;
use crate::{Error, Result};

/// Weight sums within this distance of one are silently renormalised.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// A probability measure on finitely many points of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from an `n × d` point array and `n` weights.
    ///
    /// Weights must be strictly positive and sum to one within
    /// [`RENORMALIZE_TOL`]; they are renormalised unless they already sum to
    /// one up to rounding.
    pub fn new(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidMeasure("points have dimension 0".into()));
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("points"));
        }
        if let Some((k, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidMeasure(format!(
                "weight {k} is {w}; atoms must carry strictly positive mass"
            )));
        }
        let total = numeric::sum(weights.iter().copied());
        if (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::NotNormalized { sum: total });
        }
        // Weights already normalised up to rounding are kept bit for bit, so
        // loading a saved measure reproduces it exactly.
        let weights: Vec<f64> = if (total - 1.0).abs() <= n as f64 * f64::EPSILON {
            weights
        } else {
            weights.iter().map(|w| w / total).collect()
        };
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            points,
            weights,
            log_weights,
        })
    }

    /// Builds a measure from a list of coordinate vectors.
    pub fn from_rows(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((points.len(), d), flat)
            .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
        Self::new(arr, weights)
    }

    /// Uniform weights on the given points.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// One-dimensional measure from coordinates and weights.
    pub fn on_line(xs: &[f64], weights: Vec<f64>) -> Result<Self> {
        let arr = Array2::from_shape_vec((xs.len(), 1), xs.to_vec())
            .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
        Self::new(arr, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Index of the heaviest atom (lowest index on ties).
    pub fn heaviest_atom(&self) -> usize {
        numeric::argmax(&self.weights)
    }
}

/// `n` equispaced points on `[lo, hi]` weighted by `density`, normalised.
pub fn make_grid_measure<F>(lo: f64, hi: f64, n: usize, density: F) -> Result<DiscreteMeasure>
where
    F: Fn(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::InvalidMeasure(format!("grid needs lo < hi, got [{lo}, {hi}]")));
    }
    if n == 0 {
        return Err(Error::InvalidMeasure("grid needs at least one point".into()));
    }
    let xs = grid_points(lo, hi, n);
    let raw: Vec<f64> = xs.iter().map(|&x| density(x)).collect();
    if raw.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidMeasure("density must be finite and nonnegative".into()));
    }
    let total = numeric::sum(raw.iter().copied());
    if total <= 0.0 {
        return Err(Error::InvalidMeasure("density vanishes on every grid point".into()));
    }
    if raw.contains(&0.0) {
        return Err(Error::InvalidMeasure(
            "density vanishes on some grid points; zero-mass atoms are not allowed".into(),
        ));
    }
    let weights = raw.iter().map(|v| v / total).collect();
    DiscreteMeasure::on_line(&xs, weights)
}

/// `n` equispaced points from `lo` to `hi` inclusive (`[lo]` when `n == 1`).
pub fn grid_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + step * k as f64).collect()
}

/// How the cost matrix of an instance is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `½‖x − y‖²`
    HalfSqEuclidean,
    /// `‖x − y‖`
    Euclidean,
    /// A user-supplied `n × m` matrix.
    Explicit(Array2<f64>),
}

impl CostKind {
    pub fn name(&self) -> &'static str {
        match self {
            CostKind::HalfSqEuclidean => "half_sqeuclidean",
            CostKind::Euclidean => "euclidean",
            CostKind::Explicit(_) => "explicit",
        }
    }
}

/// Cost matrix `c_ij` between the atoms of `mu` and `nu`.
pub fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure, kind: &CostKind) -> Result<Array2<f64>> {
    let (n, m) = (mu.len(), nu.len());
    match kind {
        CostKind::Explicit(c) => {
            if c.dim() != (n, m) {
                return Err(Error::InvalidInstance(format!(
                    "cost matrix is {:?}, expected ({n}, {m})",
                    c.dim()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("cost matrix"));
            }
            Ok(c.clone())
        }
        CostKind::HalfSqEuclidean | CostKind::Euclidean => {
            if mu.dim() != nu.dim() {
                return Err(Error::DimensionMismatch {
                    expected: mu.dim(),
                    got: nu.dim(),
                });
            }
            let squared = matches!(kind, CostKind::HalfSqEuclidean);
            Ok(Array2::from_shape_fn((n, m), |(i, j)| {
                let d2: f64 = mu
                    .point(i)
                    .iter()
                    .zip(nu.point(j).iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                if squared {
                    0.5 * d2
                } else {
                    d2.sqrt()
                }
            }))
        }
    }
}

/// One entropic optimal transport problem `(μ, ν, c, ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: Array2<f64>,
    cost_kind: CostKind,
    epsilon: f64,
    scaled_cost: Array2<f64>,
}

impl Instance {
    pub fn new(mu: DiscreteMeasure, nu: DiscreteMeasure, kind: CostKind, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "epsilon must be finite and strictly positive, got {epsilon}"
            )));
        }
        let cost = cost_matrix(&mu, &nu, &kind)?;
        let scaled_cost = cost.mapv(|c| c / epsilon);
        if scaled_cost.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost / epsilon"));
        }
        Ok(Self {
            mu,
            nu,
            cost,
            cost_kind: kind,
            epsilon,
            scaled_cost,
        })
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    /// Weights of μ.
    pub fn a(&self) -> &[f64] {
        self.mu.weights()
    }

    /// Weights of ν.
    pub fn b(&self) -> &[f64] {
        self.nu.weights()
    }

    pub fn log_a(&self) -> &[f64] {
        self.mu.log_weights()
    }

    pub fn log_b(&self) -> &[f64] {
        self.nu.log_weights()
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn m(&self) -> usize {
        self.nu.len()
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }

    pub fn cost_kind(&self) -> &CostKind {
        &self.cost_kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `c / ε`, precomputed.
    pub fn scaled_cost(&self) -> &Array2<f64> {
        &self.scaled_cost
    }

    pub fn max_abs_cost(&self) -> f64 {
        self.cost.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn has_nonnegative_cost(&self) -> bool {
        self.cost.iter().all(|c| *c >= 0.0)
    }

    /// Same marginals and cost with a different regularisation.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.mu.clone(), self.nu.clone(), self.cost_kind.clone(), epsilon)
    }

    /// SHA-256 over the bit patterns of every field, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (tag, measure) in [(b'x', &self.mu), (b'y', &self.nu)] {
            h.update([tag]);
            h.update((measure.len() as u64).to_le_bytes());
            h.update((measure.dim() as u64).to_le_bytes());
            for v in measure.points().iter().chain(measure.weights()) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.update(b"c");
        for v in self.cost.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(self.epsilon.to_bits().to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn to_file(&self) -> InstanceFile {
        let rows = |m: &DiscreteMeasure| -> Vec<Vec<f64>> {
            m.points().rows().into_iter().map(|r| r.to_vec()).collect()
        };
        let cost = match &self.cost_kind {
            CostKind::HalfSqEuclidean => CostField::Named("half_sqeuclidean".into()),
            CostKind::Euclidean => CostField::Named("euclidean".into()),
            CostKind::Explicit(c) => {
                CostField::Matrix(c.rows().into_iter().map(|r| r.to_vec()).collect())
            }
        };
        InstanceFile {
            x_points: rows(&self.mu),
            x_weights: self.mu.weights().to_vec(),
            y_points: rows(&self.nu),
            y_weights: self.nu.weights().to_vec(),
            cost,
            epsilon: self.epsilon,
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        let mu = DiscreteMeasure::from_rows(&file.x_points, file.x_weights)?;
        let nu = DiscreteMeasure::from_rows(&file.y_points, file.y_weights)?;
        let kind = match file.cost {
            CostField::Named(name) => match name.as_str() {
                "half_sqeuclidean" => CostKind::HalfSqEuclidean,
                "euclidean" => CostKind::Euclidean,
                other => {
                    return Err(Error::InvalidInstance(format!("unknown cost kind `{other}`")))
                }
            },
            CostField::Matrix(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != cols) {
                    return Err(Error::InvalidInstance("ragged cost matrix".into()));
                }
                let flat = rows.iter().flatten().copied().collect();
                CostKind::Explicit(
                    Array2::from_shape_vec((rows.len(), cols), flat)
                        .map_err(|e| Error::InvalidInstance(e.to_string()))?,
                )
            }
        };
        Self::new(mu, nu, kind, file.epsilon)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serialises")
    }
}

/// On-disk layout of an instance (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub x_points: Vec<Vec<f64>>,
    pub x_weights: Vec<f64>,
    pub y_points: Vec<Vec<f64>>,
    pub y_weights: Vec<f64>,
    pub cost: CostField,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostField {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    Instance::from_json_str(&text)
}

/// Writes an instance file.
pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, inst.to_json_string())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line(xs: &[f64]) -> DiscreteMeasure {
        let n = xs.len();
        DiscreteMeasure::on_line(xs, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn grid_uniform_two_points() {
        let m = make_grid_measure(0.0, 1.0, 2, |_| 1.0).unwrap();
        assert_eq!(m.points().column(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn grid_single_atom_has_unit_mass() {
        let m = make_grid_measure(0.0, 1.0, 1, |x| 3.0 + x).unwrap();
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn grid_normal_pdf_matches_direct_evaluation() {
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let m = make_grid_measure(-3.0, 3.0, 64, pdf).unwrap();
        let xs: Vec<f64> = (0..64).map(|k| -3.0 + 6.0 * k as f64 / 63.0).collect();
        let raw: Vec<f64> = xs.iter().map(|&x| pdf(x)).collect();
        let z: f64 = raw.iter().sum();
        for (w, r) in m.weights().iter().zip(&raw) {
            assert!((w - r / z).abs() < 1e-15);
        }
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_zero_density() {
        assert!(make_grid_measure(0.0, 1.0, 4, |_| 0.0).is_err());
        assert!(make_grid_measure(1.0, 0.0, 4, |_| 1.0).is_err());
    }

    #[test]
    fn zero_weight_atoms_rejected() {
        let err = DiscreteMeasure::on_line(&[0.0, 1.0], vec![1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidMeasure(_)));
    }

    #[test]
    fn renormalises_within_tolerance_only() {
        let m = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.5, 0.5 + 1e-10]).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let err = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.5, 0.5 + 1e-6]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let err = DiscreteMeasure::from_rows(&[vec![0.0], vec![0.0, 1.0]], vec![0.5, 0.5]);
        assert!(err.is_err());
    }

    #[test]
    fn cost_of_identical_points_is_zero() {
        let x = line(&[0.0]);
        let c = cost_matrix(&x, &x, &CostKind::HalfSqEuclidean).unwrap();
        assert_eq!(c, array![[0.0]]);
    }

    #[test]
    fn half_sqeuclidean_single_pair() {
        let c = cost_matrix(&line(&[0.0]), &line(&[2.0]), &CostKind::HalfSqEuclidean).unwrap();
        assert_eq!(c, array![[2.0]]);
        let e = cost_matrix(&line(&[0.0]), &line(&[2.0]), &CostKind::Euclidean).unwrap();
        assert_eq!(e, array![[2.0]]);
    }

    #[test]
    fn cost_matches_per_pair_oracle() {
        let xs = [[0.1, 0.7], [0.4, -0.3], [1.2, 0.0]];
        let ys = [[0.0, 0.0], [0.5, 0.5], [-0.2, 0.9], [1.0, 1.0]];
        let mu = DiscreteMeasure::from_rows(
            &xs.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let nu = DiscreteMeasure::from_rows(
            &ys.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
            vec![0.25; 4],
        )
        .unwrap();
        let c = cost_matrix(&mu, &nu, &CostKind::HalfSqEuclidean).unwrap();
        let e = cost_matrix(&mu, &nu, &CostKind::Euclidean).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let dx = xs[i][0] - ys[j][0];
                let dy = xs[i][1] - ys[j][1];
                assert!((c[[i, j]] - 0.5 * (dx * dx + dy * dy)).abs() < 1e-15);
                assert!((e[[i, j]] - (dx * dx + dy * dy).sqrt()).abs() < 1e-15);
            }
        }
        let ct = cost_matrix(&nu, &mu, &CostKind::HalfSqEuclidean).unwrap();
        assert_eq!(c.t(), ct);
    }

    #[test]
    fn cost_dimension_mismatch() {
        let a = line(&[0.0]);
        let b = DiscreteMeasure::from_rows(&[vec![0.0, 0.0]], vec![1.0]).unwrap();
        assert!(cost_matrix(&a, &b, &CostKind::Euclidean).is_err());
    }

    #[test]
    fn explicit_cost_rejects_non_finite() {
        let a = line(&[0.0]);
        let err = cost_matrix(&a, &a, &CostKind::Explicit(array![[f64::NAN]]));
        assert!(err.is_err());
        let err = cost_matrix(&a, &a, &CostKind::Explicit(array![[0.0, 1.0]]));
        assert!(err.is_err());
    }

    #[test]
    fn minimal_instance_file() {
        let text = r#"{"x_points": [[0.0]], "x_weights": [1.0],
                       "y_points": [[1.0]], "y_weights": [1.0],
                       "cost": "half_sqeuclidean", "epsilon": 0.5}"#;
        let inst = Instance::from_json_str(text).unwrap();
        assert_eq!((inst.n(), inst.m()), (1, 1));
        assert_eq!(inst.cost()[[0, 0]], 0.5);
    }

    #[test]
    fn instance_file_renormalises_tiny_excess() {
        let text = r#"{"x_points": [[0.0], [1.0]], "x_weights": [0.5, 0.5000000001],
                       "y_points": [[1.0]], "y_weights": [1.0],
                       "cost": [[1.0], [2.0]], "epsilon": 1.0}"#;
        let inst = Instance::from_json_str(text).unwrap();
        assert!((inst.a().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn instance_file_rejects_bad_epsilon_and_fields() {
        let zero = r#"{"x_points": [[0.0]], "x_weights": [1.0], "y_points": [[1.0]],
                       "y_weights": [1.0], "cost": "euclidean", "epsilon": 0}"#;
        assert!(matches!(
            Instance::from_json_str(zero).unwrap_err(),
            Error::InvalidInstance(_)
        ));
        let neg = zero.replace("\"epsilon\": 0", "\"epsilon\": -1");
        assert!(Instance::from_json_str(&neg).is_err());
        let unknown = zero.replace("\"euclidean\"", "\"manhattan\"");
        assert!(Instance::from_json_str(&unknown).is_err());
        let extra = zero.replace("\"epsilon\": 0", "\"epsilon\": 1, \"bogus\": 3");
        assert!(Instance::from_json_str(&extra).is_err());
    }

    #[test]
    fn save_load_round_trip_through_disk() {
        let mu = DiscreteMeasure::on_line(&[0.1, 0.35, 0.9], vec![0.2, 0.3, 0.5]).unwrap();
        let nu = DiscreteMeasure::on_line(&[0.0, 1.0 / 3.0], vec![0.7, 0.3]).unwrap();
        let inst = Instance::new(mu, nu, CostKind::HalfSqEuclidean, 0.1 + 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.json");
        save_instance(&inst, &path).unwrap();
        let back = load_instance(&path).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.digest(), inst.digest());
    }
}
