//! Spectral normalization by power iteration on the weight reshaped to
//! `rows × (product of remaining dims)`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Tensor;

/// Below this estimate the matrix is treated as zero and left unnormalized.
const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerIterState {
    /// Left singular-vector estimate, unit length.
    pub u: Vec<f64>,
    pub iteration_count: u64,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_t_vec(w: &[f64], rows: usize, cols: usize, u: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; cols];
    for (r, &ur) in u.iter().enumerate().take(rows) {
        for (vc, &wc) in v.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *vc += ur * wc;
        }
    }
    v
}

fn mat_vec(w: &[f64], cols: usize, v: &[f64]) -> Vec<f64> {
    w.chunks_exact(cols).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

impl PowerIterState {
    pub fn new<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut u) == 0.0 {
            u[0] = 1.0;
        }
        Self { u, iteration_count: 0 }
    }

    /// One power-iteration step on `w` (`rows × cols`, row-major). Updates `u`
    /// and returns `σ̂ = uᵀ W v`, or `None` (leaving `u` untouched) when the
    /// matrix is numerically zero.
    pub fn iterate(&mut self, w: &[f64], rows: usize, cols: usize) -> Option<f64> {
        debug_assert_eq!(w.len(), rows * cols);
        let mut v = mat_t_vec(w, rows, cols, &self.u);
        if normalize(&mut v) < SIGMA_FLOOR {
            return None;
        }
        let mut u = mat_vec(w, cols, &v);
        let sigma = normalize(&mut u);
        if sigma < SIGMA_FLOOR {
            return None;
        }
        self.u = u;
        self.iteration_count += 1;
        Some(sigma)
    }

    /// `σ̂` for the current `u` without advancing it: `‖Wᵀu‖`, which equals
    /// `uᵀ W v` for `v = Wᵀu / ‖Wᵀu‖`.
    pub fn estimate(&self, w: &[f64], rows: usize, cols: usize) -> Option<f64> {
        let n = mat_t_vec(w, rows, cols, &self.u).iter().map(|x| x * x).sum::<f64>().sqrt();
        (n >= SIGMA_FLOOR).then_some(n)
    }

    pub fn round_to_f32(&mut self) {
        self.u.iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
}

/// Result of [`spectral_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNorm {
    pub weight: Tensor,
    /// The divisor used; 1 when normalization was skipped.
    pub sigma: f64,
    /// Set when the matrix was numerically zero and returned unchanged.
    pub skipped: bool,
}

/// Matrix view of a weight: first dimension by the product of the rest.
pub fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    let rows = shape.first().copied().unwrap_or(1);
    let cols = shape.iter().skip(1).product::<usize>().max(1);
    (rows, cols)
}

/// One power-iteration step, then `weight / σ̂`.
pub fn spectral_normalize(weight: &Tensor, state: &mut PowerIterState) -> SpectralNorm {
    let (rows, cols) = matrix_dims(weight.shape());
    match state.iterate(weight.data(), rows, cols) {
        Some(sigma) => {
            let data = weight.data().iter().map(|w| w / sigma).collect();
            SpectralNorm {
                weight: Tensor::new(weight.shape().to_vec(), data).expect("same shape"),
                sigma,
                skipped: false,
            }
        }
        None => SpectralNorm { weight: weight.clone(), sigma: 1.0, skipped: true },
    }
}
