//! Pixel-level weight maps: every pixel accumulates the weights of the
//! patches that cover it.

use std::fmt::Write as _;

use crate::encoders::PatchRect;
use crate::error::{GmpError, Result};
use crate::pooling::PatchWeights;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl WeightMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(GmpError::invalid(format!(
                "weight map must be at least 1x1, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(GmpError::DimensionMismatch {
                context: "weight map values",
                expected: height * width,
                actual: values.len(),
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Plain PGM (P2), normalized to `[0, 255]`.
    pub fn to_pgm(&self) -> String {
        let norm = normalize_map(self);
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for r in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|c| ((norm.get(r, c) * 255.0).round() as u8).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// `height,width` header, the dimensions, then one CSV line per row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("height,width\n{},{}\n", self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                if c > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.get(r, c));
            }
            out.push('\n');
        }
        out
    }

    /// Multiplies a grayscale image (row-major, same size) by the
    /// normalized map.
    pub fn overlay(&self, intensities: &[f64]) -> Result<Vec<f64>> {
        if intensities.len() != self.values.len() {
            return Err(GmpError::DimensionMismatch {
                context: "overlay image",
                expected: self.values.len(),
                actual: intensities.len(),
            });
        }
        let norm = normalize_map(self);
        Ok(intensities
            .iter()
            .zip(norm.values())
            .map(|(i, m)| i * m)
            .collect())
    }
}

/// Clips `[start, start + len)` to `[0, limit)`.
fn clip(start: i64, len: i64, limit: usize) -> Option<(usize, usize)> {
    let limit = limit as i64;
    let lo = start.clamp(0, limit);
    let hi = start.saturating_add(len).clamp(0, limit);
    (lo < hi).then_some((lo as usize, hi as usize))
}

/// Renders `s_l = Σ_{i : l ∈ patch i} αᵢ` over an `height × width` image.
///
/// Rectangles are half-open and clipped to the image. Each patch adds four
/// corner updates to a difference table whose 2-d prefix sum is the map,
/// so the cost is `O(N + H·W)`.
pub fn render_weight_map(
    geometry: &[PatchRect],
    weights: &PatchWeights,
    height: usize,
    width: usize,
) -> Result<WeightMap> {
    if height == 0 || width == 0 {
        return Err(GmpError::invalid(format!(
            "zero-area image {height}x{width}"
        )));
    }
    if geometry.len() != weights.len() {
        return Err(GmpError::DimensionMismatch {
            context: "patch geometry",
            expected: weights.len(),
            actual: geometry.len(),
        });
    }
    let stride = width + 1;
    let mut diff = vec![0.0; (height + 1) * stride];
    for (rect, &a) in geometry.iter().zip(&weights.alpha) {
        let (Some((x0, x1)), Some((y0, y1))) = (
            clip(rect.x, rect.width, width),
            clip(rect.y, rect.height, height),
        ) else {
            continue;
        };
        diff[y0 * stride + x0] += a;
        diff[y0 * stride + x1] -= a;
        diff[y1 * stride + x0] -= a;
        diff[y1 * stride + x1] += a;
    }
    // Running sums along rows, then down columns.
    for r in 0..height {
        for c in 1..width {
            diff[r * stride + c] += diff[r * stride + c - 1];
        }
    }
    for r in 1..height {
        for c in 0..width {
            diff[r * stride + c] += diff[(r - 1) * stride + c];
        }
    }
    let values = (0..height)
        .flat_map(|r| diff[r * stride..r * stride + width].to_vec())
        .collect();
    WeightMap::new(height, width, values)
}

/// Affine rescale to `[0, 1]`; a constant map becomes 0.5 everywhere.
pub fn normalize_map(m: &WeightMap) -> WeightMap {
    let lo = m.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        m.values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; m.values.len()]
    };
    WeightMap {
        height: m.height,
        width: m.width,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_force(geometry: &[PatchRect], alpha: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for r in 0..h as i64 {
            for c in 0..w as i64 {
                for (p, a) in geometry.iter().zip(alpha) {
                    if c >= p.x && c < p.x + p.width && r >= p.y && r < p.y + p.height {
                        out[(r * w as i64 + c) as usize] += a;
                    }
                }
            }
        }
        out
    }

    fn weights(a: &[f64]) -> PatchWeights {
        PatchWeights::given(a.to_vec()).unwrap()
    }

    #[test]
    fn full_cover() {
        let m = render_weight_map(&[PatchRect::new(0, 0, 4, 3)], &weights(&[2.0]), 3, 4).unwrap();
        assert!(m.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn overlap_counts_twice() {
        let geo = [PatchRect::new(0, 0, 3, 2), PatchRect::new(2, 1, 3, 2)];
        let m = render_weight_map(&geo, &weights(&[1.0, 1.0]), 4, 6).unwrap();
        assert_eq!(m.get(1, 2), 2.0);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(2, 4), 1.0);
        assert_eq!(m.get(3, 5), 0.0);
        assert_eq!(m.get(0, 5), 0.0);
    }

    #[test]
    fn zero_area_rejected() {
        assert!(render_weight_map(&[], &weights(&[]), 0, 3).is_err());
        assert!(render_weight_map(&[PatchRect::new(0, 0, 1, 1)], &weights(&[]), 2, 2).is_err());
    }

    #[test]
    fn normalize_examples() {
        let m = WeightMap::new(1, 2, vec![0.0, 2.0]).unwrap();
        assert_eq!(normalize_map(&m).values(), &[0.0, 1.0]);
        let m = WeightMap::new(2, 2, vec![3.0; 4]).unwrap();
        assert_eq!(normalize_map(&m).values(), &[0.5; 4]);
        let m = WeightMap::new(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(normalize_map(&m).values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn pgm_and_csv_formats() {
        let m = WeightMap::new(2, 3, vec![0.0, 1.0, 2.0, 2.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.to_pgm(), "P2\n3 2\n255\n0 128 255\n255 128 0\n");
        assert_eq!(m.to_csv(), "height,width\n2,3\n0,1,2\n2,1,0\n");
        assert_eq!(
            m.overlay(&[1.0; 6]).unwrap(),
            vec![0.0, 0.5, 1.0, 1.0, 0.5, 0.0]
        );
    }

    #[test]
    fn random_layout_matches_brute_force() {
        let mut rng = fixtures::rng(2024);
        for _ in 0..10 {
            let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
            let n = rng.random_range(0..15);
            let geo = fixtures::random_layout(&mut rng, n, h, w);
            let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let m = render_weight_map(&geo, &weights(&alpha), h, w).unwrap();
            for (a, b) in m.values().iter().zip(brute_force(&geo, &alpha, h, w)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rendering_is_linear(seed in 0u64..10_000, a in -8i32..8, b in -8i32..8) {
            // dyadic weights keep every partial sum exact
            let mut rng = fixtures::rng(seed);
            let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
            let n = rng.random_range(1..10);
            let geo = fixtures::random_layout(&mut rng, n, h, w);
            let w1: Vec<f64> = (0..n).map(|_| rng.random_range(-64i32..64) as f64 / 16.0).collect();
            let w2: Vec<f64> = (0..n).map(|_| rng.random_range(-64i32..64) as f64 / 16.0).collect();
            let (a, b) = (a as f64, b as f64);
            let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
            let m1 = render_weight_map(&geo, &weights(&w1), h, w).unwrap();
            let m2 = render_weight_map(&geo, &weights(&w2), h, w).unwrap();
            let mc = render_weight_map(&geo, &weights(&combo), h, w).unwrap();
            for i in 0..h * w {
                prop_assert_eq!(mc.values()[i], a * m1.values()[i] + b * m2.values()[i]);
            }
        }
    }
}
