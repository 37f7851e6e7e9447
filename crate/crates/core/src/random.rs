//! Seeded generation of test instances, potentials and mass vectors.
//!
//! Every generator draws from a ChaCha8 stream so that a seed pins the
//! output on every platform.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::measures::{CostKind, DiscreteMeasure};
use crate::{Instance, Potential};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flat Dirichlet weights (normalised unit exponentials).
pub fn dirichlet_weights<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            e.max(1e-300)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// `n` points uniform in the unit square.
pub fn unit_square_points<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, 2), |_| rng.random::<f64>())
}

/// Points uniform in `[0, 1]²`, flat Dirichlet weights, `c = ½‖x − y‖²`.
pub fn random_instance(n: usize, m: usize, epsilon: f64, seed: u64) -> Instance {
    random_instance_with(&mut rng(seed), n, m, epsilon)
}

pub fn random_instance_with<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, epsilon: f64) -> Instance {
    let x = unit_square_points(rng, n);
    let a = dirichlet_weights(rng, n);
    let y = unit_square_points(rng, m);
    let b = dirichlet_weights(rng, m);
    let mu = DiscreteMeasure::new(x, a).expect("generated weights are valid");
    let nu = DiscreteMeasure::new(y, b).expect("generated weights are valid");
    Instance::new(mu, nu, CostKind::HalfSqEuclidean, epsilon).expect("generated instance is valid")
}

/// Entries i.i.d. `N(0, scale²)`.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            scale * z
        })
        .collect()
}

pub fn random_potential<R: Rng + ?Sized>(rng: &mut R, m: usize, scale: f64) -> Potential {
    Potential::new(gaussian_vector(rng, m, scale)).expect("gaussian draws are finite")
}

/// Entries uniform in `[−bound, bound]`.
pub fn box_potential<R: Rng + ?Sized>(rng: &mut R, m: usize, bound: f64) -> Potential {
    let v = (0..m).map(|_| bound * (2.0 * rng.random::<f64>() - 1.0)).collect();
    Potential::new(v).expect("uniform draws are finite")
}
