use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProjectionMeta {
    Pca { explained_variance: [f64; 2] },
    Tsne { perplexity: f64, iterations: usize, kl_divergence: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection2D {
    pub method: ProjectionMethod,
    pub points: Array2<f64>,
    pub meta: ProjectionMeta,
}

/// Projection onto the two leading principal directions of the centred rows.
pub fn pca2(population: &Array2<f64>) -> Result<Projection2D> {
    let (n, dim) = population.dim();
    if n < 3 {
        return Err(Error::validation(format!("PCA needs at least 3 points, got {n}")));
    }
    if dim == 0 || population.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("PCA input must be finite with at least one column"));
    }
    let mean = population.mean_axis(Axis(0)).expect("nonempty");
    let centred = population - &mean;
    let cov = centred.t().dot(&centred) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut points = Array2::zeros((n, 2));
    let mut explained = [0.0; 2];
    for (k, &col) in order.iter().take(2).enumerate() {
        let mut axis = Array1::from_iter(eig.eigenvectors.column(col).iter().copied());
        if let Some(first) = axis.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                axis.mapv_inplace(|v| -v);
            }
        }
        points.column_mut(k).assign(&centred.dot(&axis));
        explained[k] = if total > 0.0 { eig.eigenvalues[col].max(0.0) / total } else { 0.0 };
    }
    Ok(Projection2D { method: ProjectionMethod::Pca, points, meta: ProjectionMeta::Pca { explained_variance: explained } })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// `None` uses n / 12.
    pub learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig { perplexity: 30.0, iterations: 1000, exaggeration: 12.0, exaggeration_iterations: 250, learning_rate: None, seed: 0 }
    }
}

const CALIBRATION_STEPS: usize = 200;
const PERPLEXITY_TOLERANCE: f64 = 1e-6;

fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Perplexity `exp(H)` of a probability row, ignoring zeros.
pub fn perplexity_of(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h.exp()
}

fn conditional_row(d: &[f64], i: usize, beta: f64, out: &mut [f64]) {
    let min = d.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (o, &dj)) in out.iter_mut().zip(d).enumerate() {
        *o = if j == i { 0.0 } else { (-(dj - min) * beta).exp() };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Conditional affinities `p(j|i)` from squared distances, each row tuned by
/// bisection on the Gaussian precision to reach `perplexity`. Returns the rows
/// and the perplexity each row achieved.
pub fn calibrate_affinities(sq_dist: &Array2<f64>, perplexity: f64) -> Result<(Array2<f64>, Vec<f64>)> {
    let n = sq_dist.nrows();
    if !(perplexity > 0.0) || perplexity > (n.saturating_sub(1)) as f64 {
        return Err(Error::validation(format!("perplexity {perplexity} is infeasible for {n} points")));
    }
    let mut p = Array2::zeros((n, n));
    let mut achieved = Vec::with_capacity(n);
    let mut row = vec![0.0; n];
    for i in 0..n {
        let d = sq_dist.row(i).to_vec();
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut beta = 1.0;
        for _ in 0..CALIBRATION_STEPS {
            conditional_row(&d, i, beta, &mut row);
            let perp = perplexity_of(&row);
            if (perp - perplexity).abs() <= PERPLEXITY_TOLERANCE {
                break;
            }
            if perp > perplexity {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        conditional_row(&d, i, beta, &mut row);
        achieved.push(perplexity_of(&row));
        p.row_mut(i).assign(&Array1::from(row.clone()));
    }
    Ok((p, achieved))
}

/// Exact t-SNE to two dimensions. Pure in its arguments.
pub fn tsne2(population: &Array2<f64>, config: &TsneConfig) -> Result<Projection2D> {
    let n = population.nrows();
    if n < 3 {
        return Err(Error::validation(format!("t-SNE needs at least 3 points, got {n}")));
    }
    if (n as f64) < 3.0 * config.perplexity {
        return Err(Error::validation(format!("perplexity {} is too large for {n} points", config.perplexity)));
    }
    if population.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("t-SNE input must be finite"));
    }
    let (cond, _) = calibrate_affinities(&squared_distances(population), config.perplexity)?;
    let mut p = (&cond + &cond.t()) / (2.0 * n as f64);
    p.mapv_inplace(|v| v.max(1e-12));

    let lr = config.learning_rate.unwrap_or(n as f64 / 12.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-4).expect("positive std");
    let mut y = Array2::from_shape_simple_fn((n, 2), || init.sample(&mut rng));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut num = Array2::<f64>::zeros((n, n));
    let mut grad = Array2::<f64>::zeros((n, 2));

    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iterations { config.exaggeration } else { 1.0 };
        let momentum = if iter < config.exaggeration_iterations { 0.5 } else { 0.8 };
        let z = student_kernel(&y, &mut num);
        grad.fill(0.0);
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[[i, j]];
                let coeff = (exaggeration * p[[i, j]] - w / z) * w;
                g0 += coeff * (y[[i, 0]] - y[[j, 0]]);
                g1 += coeff * (y[[i, 1]] - y[[j, 1]]);
            }
            grad[[i, 0]] = 4.0 * g0;
            grad[[i, 1]] = 4.0 * g1;
        }
        ndarray::Zip::from(&mut gains).and(&grad).and(&update).for_each(|g, &d, &u| {
            *g = if (d > 0.0) != (u > 0.0) { *g + 0.2 } else { (*g * 0.8).max(0.01) };
        });
        ndarray::Zip::from(&mut update).and(&gains).and(&grad).for_each(|u, &g, &d| *u = momentum * *u - lr * g * d);
        y += &update;
        let centre = y.mean_axis(Axis(0)).expect("nonempty");
        y -= &centre;
    }

    let z = student_kernel(&y, &mut num);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[[i, j]] / z).max(1e-300);
                kl += p[[i, j]] * (p[[i, j]] / q).ln();
            }
        }
    }
    if !y.iter().all(|v| v.is_finite()) || !kl.is_finite() {
        return Err(Error::NonFinite("t-SNE diverged".into()));
    }
    Ok(Projection2D {
        method: ProjectionMethod::Tsne,
        points: y,
        meta: ProjectionMeta::Tsne { perplexity: config.perplexity, iterations: config.iterations, kl_divergence: kl.max(0.0) },
    })
}

/// Fills `num[i][j] = 1 / (1 + |y_i − y_j|²)` and returns its off-diagonal sum.
fn student_kernel(y: &Array2<f64>, num: &mut Array2<f64>) -> f64 {
    let n = y.nrows();
    let mut z = 0.0;
    for i in 0..n {
        num[[i, i]] = 0.0;
        for j in i + 1..n {
            let d0 = y[[i, 0]] - y[[j, 0]];
            let d1 = y[[i, 1]] - y[[j, 1]];
            let w = 1.0 / (1.0 + d0 * d0 + d1 * d1);
            num[[i, j]] = w;
            num[[j, i]] = w;
            z += 2.0 * w;
        }
    }
    z
}
