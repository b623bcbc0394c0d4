//! Synthetic ground-truth surfaces over a dose grid.
//!
//! Used as fixtures when no measured responses are available: a Gaussian
//! process draw, a bounded Hill-type combination surface and a plain quadratic.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::designs::{full_factorial, Design, DoseGrid};
use crate::error::{domain, Result};
use crate::gp::KrigingModel;
use crate::kernels::KernelSpec;

/// Three-drug viability surface built from single-agent Hill curves.
///
/// Each drug alone gives `e_i = floor_i + (1 - floor_i) / (1 + (c_i / ic50_i)^slope_i)`;
/// the combination is the Bliss product `e_A e_B e_C` plus an antagonism term
/// `antagonism * e_A (1 - e_B)(1 - e_C)` that props up the response when B and
/// C are both dosed. With `antagonism` in `[0, 1]` the response stays in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationSurface {
    pub ic50: [f64; 3],
    pub slope: [f64; 3],
    pub floor: [f64; 3],
    pub antagonism: f64,
}

impl CombinationSurface {
    /// Gentle normal-cell-like responses. A Matérn 5/2 Kriging fit to the
    /// noise-free full grid gives ranges near (1.7, 2.2, 1.5), variance 0.19
    /// and trend 0.59.
    pub fn normal_cell() -> Self {
        CombinationSurface {
            ic50: [200.0, 80.0, 250.0],
            slope: [1.3, 1.2, 1.5],
            floor: [0.2, 0.3, 0.1],
            antagonism: 0.3,
        }
    }

    /// Strong cancer-cell-like responses with B/C antagonism at high doses
    /// (C alone at 300 gives about 0.07, B and C together about 0.23). The
    /// noise-free Kriging fit has ranges near (1.2, 1.7, 0.4), variance 0.14
    /// and trend 0.37.
    pub fn cancer_cell() -> Self {
        CombinationSurface {
            ic50: [120.0, 60.0, 80.0],
            slope: [1.2, 1.3, 2.0],
            floor: [0.2, 0.3, 0.0],
            antagonism: 0.45,
        }
    }

    pub fn value(&self, doses: &[f64]) -> f64 {
        let e: Vec<f64> = (0..3)
            .map(|i| {
                let u = doses[i] / self.ic50[i];
                let hill = if u > 0.0 { 1.0 / (1.0 + u.powf(self.slope[i])) } else { 1.0 };
                self.floor[i] + (1.0 - self.floor[i]) * hill
            })
            .collect();
        e[0] * e[1] * e[2] + self.antagonism * e[0] * (1.0 - e[1]) * (1.0 - e[2])
    }
}

/// A fixed quadratic in standardized coordinates.
pub fn quadratic_surface(x: &[f64]) -> f64 {
    let (a, b, c) = (x[0], x[1], x[2]);
    0.85 - 0.3 * a - 0.25 * b + 0.15 * a * b - 0.1 * c * c + 0.05 * b * c
}

/// Which truth to generate.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Combination(CombinationSurface),
    Quadratic,
    GaussianProcess {
        kernel: KernelSpec,
        thetas: Vec<f64>,
        sigma2: f64,
        mu: f64,
    },
}

/// Noise-free truth at every run of `design`. GP draws use `seed`.
pub fn truth_values(truth: &Truth, grid: &DoseGrid, design: &Design, seed: u64) -> Result<Vec<f64>> {
    match truth {
        Truth::Combination(s) => design
            .rows
            .iter()
            .map(|x| {
                if x.len() != 3 {
                    return domain("combination surfaces need 3 factors");
                }
                let doses: Vec<f64> = (0..3).map(|j| grid.unstandardize(j, x[j])).collect();
                Ok(s.value(&doses))
            })
            .collect(),
        Truth::Quadratic => Ok(design.rows.iter().map(|x| quadratic_surface(x)).collect()),
        Truth::GaussianProcess {
            kernel,
            thetas,
            sigma2,
            mu,
        } => gp_draw(&design.rows, *kernel, thetas, *sigma2, *mu, seed),
    }
}

/// One draw of `mu + Z(x)` at `rows`, `Z` a zero-mean GP with covariance
/// `sigma2 * prod K`.
pub fn gp_draw(rows: &[Vec<f64>], kernel: KernelSpec, thetas: &[f64], sigma2: f64, mu: f64, seed: u64) -> Result<Vec<f64>> {
    // A zero-noise model factors sigma2 * R with the usual jitter policy.
    let placeholder = vec![0.0; rows.len()];
    let model = KrigingModel::new(kernel, thetas.to_vec(), sigma2, 0.0, rows.to_vec(), placeholder)?;
    let l = model.cholesky_factor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_iterator(rows.len(), (0..rows.len()).map(|_| StandardNormal.sample(&mut rng)));
    Ok((l * z).iter().map(|v| v + mu).collect())
}

/// Full-factorial dataset with truth plus `N(0, noise_sd^2)` noise.
///
/// With `clamp`, responses are clipped to `[0, 1]` as for standardized ATP levels.
pub fn synthetic_dataset(grid: &DoseGrid, truth: &Truth, noise_sd: f64, seed: u64, clamp: bool) -> Result<Dataset> {
    let design = full_factorial(grid);
    let mut y = truth_values(truth, grid, &design, seed)?;
    if noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_0015e);
        let noise = Normal::new(0.0, noise_sd).map_err(|e| crate::Error::Domain(e.to_string()))?;
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    if clamp {
        for v in y.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Dataset::new(design, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_is_bounded_and_decreasing() {
        let grid = DoseGrid::default_grid();
        let full = full_factorial(&grid);
        for s in [CombinationSurface::normal_cell(), CombinationSurface::cancer_cell()] {
            let y = truth_values(&Truth::Combination(s.clone()), &grid, &full, 0).unwrap();
            assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(y[0], 1.0);
            for j in 0..3 {
                let mut prev = 1.0;
                for k in 1..8 {
                    let mut d = [0.0; 3];
                    d[j] = grid.dose(j, k);
                    let v = s.value(&d);
                    assert!(v < prev);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn cancer_antagonism_between_b_and_c() {
        let s = CombinationSurface::cancer_cell();
        let c_only = 1.0 / (1.0 + (300.0f64 / 80.0).powi(2));
        assert!((s.value(&[0.0, 0.0, 300.0]) - c_only).abs() < 1e-15);
        let e_b = 0.3 + 0.7 / (1.0 + (100.0f64 / 60.0).powf(1.3));
        let both = e_b * c_only + 0.45 * (1.0 - e_b) * (1.0 - c_only);
        assert!((s.value(&[0.0, 100.0, 300.0]) - both).abs() < 1e-15);
        assert!(both > 3.0 * c_only);
    }

    #[test]
    fn noise_is_seeded() {
        let grid = DoseGrid::default_grid();
        let t = Truth::Combination(CombinationSurface::cancer_cell());
        let a = synthetic_dataset(&grid, &t, 0.02, 9, false).unwrap();
        let b = synthetic_dataset(&grid, &t, 0.02, 9, false).unwrap();
        let c = synthetic_dataset(&grid, &t, 0.02, 10, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.responses, c.responses);
        let clamped = synthetic_dataset(&grid, &t, 0.02, 9, true).unwrap();
        assert!(clamped.first_out_of_unit_range().is_none());
    }

    #[test]
    fn gp_draw_has_right_scale() {
        let grid = DoseGrid::default_grid();
        let full = full_factorial(&grid);
        let t = Truth::GaussianProcess {
            kernel: KernelSpec::matern52(),
            thetas: vec![0.3, 0.3, 0.3],
            sigma2: 0.04,
            mu: 0.5,
        };
        let y = truth_values(&t, &grid, &full, 4).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 0.5).abs() < 0.5);
        assert!(y.iter().all(|v| v.is_finite()));
    }
}
