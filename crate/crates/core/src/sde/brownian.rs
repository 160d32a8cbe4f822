use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Four-dimensional Brownian increments on a fine grid, with coarse
/// increments obtained by summing consecutive blocks of `refinement` fine ones.
///
/// Increments come from a ChaCha8 stream keyed by `(seed, stream)`, drawn
/// step-major then component-minor, so the grid is a pure function of
/// `(seed, stream, n_coarse, refinement, dt_coarse)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    n_coarse: usize,
    refinement: usize,
    dt_coarse: f64,
    fine: Vec<[f64; 4]>,
}

impl BrownianGrid {
    pub fn generate(
        seed: u64,
        stream: u64,
        n_coarse: usize,
        refinement: usize,
        dt_coarse: f64,
    ) -> Result<Self> {
        if n_coarse == 0 || refinement == 0 {
            return Err(Error::InvalidInput(
                "n_coarse and refinement must both be >= 1".into(),
            ));
        }
        if !(dt_coarse > 0.0) || !dt_coarse.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be > 0 (got {dt_coarse})")));
        }
        let n_fine = n_coarse
            .checked_mul(refinement)
            .filter(|n| n.checked_mul(4 * std::mem::size_of::<f64>()).is_some())
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "grid size overflows: {n_coarse} coarse steps x refinement {refinement}"
                ))
            })?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let scale = (dt_coarse / refinement as f64).sqrt();
        let fine = (0..n_fine)
            .map(|_| {
                let mut z = [0.0; 4];
                for v in &mut z {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v = scale * n;
                }
                z
            })
            .collect();
        Ok(Self {
            n_coarse,
            refinement,
            dt_coarse,
            fine,
        })
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn n_fine(&self) -> usize {
        self.fine.len()
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn dt_coarse(&self) -> f64 {
        self.dt_coarse
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_coarse / self.refinement as f64
    }

    pub fn fine_increments(&self) -> &[[f64; 4]] {
        &self.fine
    }

    /// Sum of fine increments `[k r, (k+1) r)`, accumulated left to right.
    pub fn coarse_increment(&self, k: usize) -> [f64; 4] {
        let r = self.refinement;
        self.fine[k * r..(k + 1) * r]
            .iter()
            .fold([0.0; 4], |mut acc, d| {
                for i in 0..4 {
                    acc[i] += d[i];
                }
                acc
            })
    }

    pub fn coarse_increments(&self) -> Vec<[f64; 4]> {
        (0..self.n_coarse).map(|k| self.coarse_increment(k)).collect()
    }
}

/// Grid for stream 0 of `seed`.
pub fn generate_brownian(
    seed: u64,
    n_coarse: usize,
    refinement: usize,
    dt_coarse: f64,
) -> Result<BrownianGrid> {
    BrownianGrid::generate(seed, 0, n_coarse, refinement, dt_coarse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_inputs_same_grid() {
        let a = generate_brownian(11, 50, 4, 0.1).unwrap();
        let b = generate_brownian(11, 50, 4, 0.1).unwrap();
        assert_eq!(a, b);
        let c = generate_brownian(12, 50, 4, 0.1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn streams_are_distinct() {
        let a = BrownianGrid::generate(5, 0, 10, 1, 0.1).unwrap();
        let b = BrownianGrid::generate(5, 1, 10, 1, 0.1).unwrap();
        assert_ne!(a.fine_increments(), b.fine_increments());
    }

    #[test]
    fn refinement_one_coarse_equals_fine() {
        let g = generate_brownian(3, 40, 1, 0.05).unwrap();
        assert_eq!(g.coarse_increments(), g.fine_increments());
    }

    #[test]
    fn coarse_is_left_to_right_sum() {
        let g = generate_brownian(9, 25, 8, 0.02).unwrap();
        for k in 0..g.n_coarse() {
            let mut s = [0.0; 4];
            for j in 8 * k..8 * (k + 1) {
                for (acc, v) in s.iter_mut().zip(g.fine_increments()[j]) {
                    *acc += v;
                }
            }
            assert_eq!(g.coarse_increment(k), s);
        }
    }

    #[test]
    fn moments_of_increments() {
        // 25_000 steps x 4 components = 1e5 draws
        let dt = 0.01;
        let g = generate_brownian(42, 25_000, 1, dt).unwrap();
        let xs: Vec<f64> = g.fine_increments().iter().flatten().copied().collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (dt / n).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn bad_sizes_are_rejected() {
        assert!(generate_brownian(1, 0, 8, 0.1).is_err());
        assert!(generate_brownian(1, 10, 0, 0.1).is_err());
        assert!(generate_brownian(1, usize::MAX / 2, 8, 0.1).is_err());
    }
}
