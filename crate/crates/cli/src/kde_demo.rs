//! Data for the KDE equalization figure: five 1-d samples in two groups,
//! their uniform KDE, the KDE raised to the power 0.5, and the KDE with
//! equalization weights, which is flat at every sample.

use std::fmt::Write as _;

use gmp_core::kde::{equalization_weights, flatness_profile, powered_density};
use gmp_core::{DescriptorSet, Kde, QuadratureGrid};

use crate::error::Result;

pub const SAMPLES: [f64; 5] = [-11.0, -10.0, 7.0, 8.0, 9.0];
pub const SIGMA: f64 = 3.0;
pub const HEADER: &str = "x,kde,kde_pow05,weighted_kde";

#[derive(Clone, Debug, PartialEq)]
pub struct KdeDemo {
    pub x: Vec<f64>,
    /// Uniform KDE, normalized to unit integral on the grid.
    pub kde: Vec<f64>,
    /// `p^0.5`, renormalized.
    pub kde_pow05: Vec<f64>,
    /// `Σ wⱼ k_σ(x, xⱼ)` with equalization weights.
    pub weighted: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn kde_demo() -> Result<KdeDemo> {
    let samples = DescriptorSet::from_scalars(&SAMPLES)?;
    let lo = SAMPLES.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = SAMPLES.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid = QuadratureGrid::around_samples(lo, hi, SIGMA)?;
    let x = grid.nodes();
    let uniform = Kde::uniform(samples.clone(), SIGMA)?;
    let kde = powered_density(&uniform, 1.0, &grid)?;
    let kde_pow05 = powered_density(&uniform, 0.5, &grid)?;
    let w = equalization_weights(&samples, SIGMA, 0.0)?;
    let weighted = flatness_profile(&samples, &w, SIGMA, &x)?;
    Ok(KdeDemo {
        x,
        kde,
        kde_pow05,
        weighted,
        weights: w.alpha,
    })
}

impl KdeDemo {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.x.len() * 64);
        out.push_str(HEADER);
        out.push('\n');
        for i in 0..self.x.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.x[i], self.kde[i], self.kde_pow05[i], self.weighted[i]
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gmp_core::kde::{local_maxima, DEFAULT_GRID_POINTS};

    #[test]
    fn curves() {
        let d = kde_demo().unwrap();
        assert_eq!(d.x.len(), DEFAULT_GRID_POINTS);
        assert_eq!(d.x[0], -26.0);
        assert_eq!(*d.x.last().unwrap(), 24.0);
        assert_eq!(local_maxima(&d.kde).len(), 2);
        for s in SAMPLES {
            let i = d.x.iter().position(|&x| (x - s).abs() < 1e-9).unwrap();
            assert!((d.weighted[i] - 1.0).abs() <= 1e-8);
        }
        let expected = [0.51388839, 0.51388201, 4.88666546, -8.24517523, 4.88666577];
        for (w, e) in d.weights.iter().zip(expected) {
            assert!((w - e).abs() <= 1e-7);
        }
        assert_eq!(d.to_csv().lines().count(), DEFAULT_GRID_POINTS + 1);
    }

    #[test]
    fn power_flattens_the_modes() {
        let d = kde_demo().unwrap();
        let peak = |v: &[f64]| {
            let m = local_maxima(v);
            (v[m[0]], v[m[1]])
        };
        let (a, b) = peak(&d.kde);
        let (pa, pb) = peak(&d.kde_pow05);
        assert!(pa.max(pb) / pa.min(pb) < a.max(b) / a.min(b));
    }
}
