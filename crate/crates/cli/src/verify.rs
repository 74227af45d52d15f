//! Cross-module oracle suite behind the `verify` command.
//!
//! Each check compares two independent routes to the same quantity on
//! seeded random instances and reports the worst deviation it saw.

use std::f64::consts::SQRT_2;

use gmp_core::kde::local_maxima;
use gmp_core::linalg::{relative_difference, singular_values};
use gmp_core::{
    encode_bov_hard, encode_fv_hard, encode_vlad, fixtures, gmk, gmp_dual_weights, gmp_primal,
    gmp_primal_block, max_pool, ppk, sum_pool, weighted_pool, DenseMatrix, DescriptorSet,
    EncodingMatrix, GmpConfig, Kde, QuadratureGrid, SolverChoice,
};
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kde_demo::{kde_demo, SAMPLES};

/// Deliberate defects for exercising the failure path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Solve the second route of λ-dependent checks with a perturbed λ.
    Lambda,
}

impl Fault {
    fn lambda(fault: Option<Fault>, lambda: f64) -> f64 {
        match fault {
            Some(Fault::Lambda) => lambda * (1.0 + 1e-3),
            None => lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
    pub instances: usize,
    pub detail: String,
}

impl CheckResult {
    fn new(
        name: &'static str,
        tolerance: f64,
        observed: f64,
        instances: usize,
        detail: String,
    ) -> Self {
        Self {
            name,
            tolerance,
            observed,
            passed: observed <= tolerance,
            instances,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub fault: Option<Fault>,
    pub passed: usize,
    pub total: usize,
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// GMP with λ = 0 on hard BOV encodings equals max pooling.
pub fn check_bov_max(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let instances = 100;
    for i in 0..instances {
        let mut rng = fixtures::rng(seed.wrapping_add(i));
        let d = rng.random_range(1..=8);
        let c = rng.random_range(1..=16);
        let n = rng.random_range(1..=60);
        let cb = fixtures::random_codebook(&mut rng, c, d, 1.0);
        let x = fixtures::random_descriptors(&mut rng, n, d, 1.2);
        let phi = encode_bov_hard(&x, &cb)?;
        let (g, _) = gmp_primal(&phi, &GmpConfig::new(0.0))?;
        worst = worst.max(max_abs_diff(&g.values, &max_pool(&phi)?.values));
    }
    Ok(CheckResult::new(
        "bov_gmp_equals_max_pool",
        1e-10,
        worst,
        instances as usize,
        "max |gmp - max_pool| per entry".into(),
    ))
}

/// With an orthonormal codebook, GMP is the sum of the codewords present,
/// whatever their multiplicities.
pub fn check_orthonormal_theorem(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let instances = 100;
    for i in 0..instances {
        let mut rng = fixtures::rng(seed.wrapping_add(1000 + i));
        let d = rng.random_range(1..=64);
        let c = rng.random_range(1..=d);
        let n = rng.random_range(1..=3 * c);
        let q = fixtures::random_orthonormal(&mut rng, d, c);
        let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let phi = DenseMatrix::from_fn(d, n, |r, j| q.get(r, picks[j]))?;
        let (g, _) = gmp_primal(&EncodingMatrix::dense(phi.clone()), &GmpConfig::new(0.0))?;

        let mut present = vec![false; c];
        picks.iter().for_each(|&k| present[k] = true);
        let expected: Vec<f64> = (0..d)
            .map(|r| (0..c).filter(|&k| present[k]).map(|k| q.get(r, k)).sum())
            .collect();
        worst = worst.max(max_abs_diff(&g.values, &expected));

        let extra = rng.random_range(1..=3);
        let dups: Vec<usize> = (0..extra).map(|_| rng.random_range(0..n)).collect();
        let phi2 = DenseMatrix::from_fn(d, n + extra, |r, j| {
            phi.get(r, if j < n { j } else { dups[j - n] })
        })?;
        let (g2, _) = gmp_primal(&EncodingMatrix::dense(phi2), &GmpConfig::new(0.0))?;
        worst = worst.max(max_abs_diff(&g2.values, &expected));
    }
    Ok(CheckResult::new(
        "orthonormal_codebook_theorem",
        1e-9,
        worst,
        instances as usize,
        "max |gmp - sum of present codewords|, with and without duplicated columns".into(),
    ))
}

/// Primal ridge solution equals the dual-weighted pooling.
pub fn check_primal_dual(seed: u64, fault: Option<Fault>) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..50 {
        let mut rng = fixtures::rng(seed.wrapping_add(2000 + i));
        let d = rng.random_range(1..=100);
        let n = rng.random_range(1..=100);
        let phi = EncodingMatrix::dense(fixtures::uniform_matrix(&mut rng, d, n));
        let k = phi.phi().inner_gram();
        for lambda in [1e1, 1e3, 1e5] {
            let (p, _) = gmp_primal(&phi, &GmpConfig::new(lambda))?;
            let w = gmp_dual_weights(&k, Fault::lambda(fault, lambda))?;
            let q = weighted_pool(&phi, &w)?;
            worst = worst.max(relative_difference(&q.values, &p.values));
            count += 1;
        }
    }
    Ok(CheckResult::new(
        "primal_equals_dual",
        1e-8,
        worst,
        count,
        "max relative difference, lambda in {1e1, 1e3, 1e5}".into(),
    ))
}

/// Block-by-block solve equals the dense solve on VLAD and hard-FV
/// encodings.
pub fn check_block_dense(seed: u64, fault: Option<Fault>) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (i, c) in [2usize, 4, 8].into_iter().enumerate() {
        for rep in 0..3u64 {
            let mut rng = fixtures::rng(seed.wrapping_add(3000 + 10 * i as u64 + rep));
            let d = rng.random_range(2..=6);
            let n = rng.random_range(c..=8 * c);
            let x = fixtures::random_descriptors(&mut rng, n, d, 1.5);
            let cb = fixtures::random_codebook(&mut rng, c, d, 1.5);
            let gmm = fixtures::random_gmm(&mut rng, c, d, 1.5);
            for phi in [encode_vlad(&x, &cb)?, encode_fv_hard(&x, &gmm)?] {
                for lambda in [1e-1, 1e1, 1e3] {
                    let block = gmp_primal_block(&phi, Fault::lambda(fault, lambda))?;
                    let dense_cfg = GmpConfig::new(lambda).with_solver(SolverChoice::DenseDirect);
                    let (dense, _) = gmp_primal(&phi.without_blocks(), &dense_cfg)?;
                    worst = worst.max(relative_difference(&block.values, &dense.values));
                    count += 1;
                }
            }
        }
    }
    Ok(CheckResult::new(
        "block_equals_dense",
        1e-10,
        worst,
        count,
        "max relative difference on vlad and fv_hard, C in {2, 4, 8}".into(),
    ))
}

/// Conjugate gradient agrees with the dense direct solve.
pub fn check_cg_direct(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    let instances = 20;
    for i in 0..instances {
        let mut rng = fixtures::rng(seed.wrapping_add(4000 + i));
        let d = rng.random_range(16..=512);
        let n = rng.random_range(1..=64);
        let phi = EncodingMatrix::dense(fixtures::uniform_matrix(&mut rng, d, n));
        let lambda = gmp_core::LAMBDA_GRID[rng.random_range(0..gmp_core::LAMBDA_GRID.len())];
        let direct_cfg = GmpConfig::new(lambda).with_solver(SolverChoice::DenseDirect);
        let (direct, _) = gmp_primal(&phi, &direct_cfg)?;
        let (cg, report) = gmp_primal(&phi, &GmpConfig::new(lambda).with_solver(SolverChoice::Cg))?;
        unconverged += usize::from(!report.converged);
        worst = worst.max(relative_difference(&cg.values, &direct.values));
    }
    Ok(CheckResult::new(
        "cg_equals_direct",
        1e-6,
        worst,
        instances as usize,
        format!("max relative difference, D <= 512; {unconverged} unconverged solves"),
    ))
}

/// Huge λ recovers sum pooling after rescaling by λ.
pub fn check_sum_limit(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let instances = 20;
    for i in 0..instances {
        let mut rng = fixtures::rng(seed.wrapping_add(5000 + i));
        let d = rng.random_range(1..=60);
        let n = rng.random_range(1..=60);
        let phi = EncodingMatrix::dense(fixtures::uniform_matrix(&mut rng, d, n));
        let s = singular_values(phi.phi())?;
        let lambda = 1e12 * s[0] * s[0];
        let (g, _) = gmp_primal(&phi, &GmpConfig::new(lambda))?;
        let scaled: Vec<f64> = g.values.iter().map(|v| v * lambda).collect();
        worst = worst.max(relative_difference(&scaled, &sum_pool(&phi)?.values));
    }
    Ok(CheckResult::new(
        "large_lambda_sum_limit",
        1e-3,
        worst,
        instances as usize,
        "max ||lambda*gmp - sum|| / ||sum||, lambda = 1e12 * sigma_max(Phi Phi^T)".into(),
    ))
}

/// Equalization weights make the weighted KDE equal 1 at every sample; the
/// uniform KDE has two modes.
pub fn check_kde_flatness() -> Result<CheckResult> {
    let demo = kde_demo()?;
    let mut worst = 0.0f64;
    for s in SAMPLES {
        let i = nearest_node(&demo.x, s);
        worst = worst.max((demo.weighted[i] - 1.0).abs());
    }
    let modes = local_maxima(&demo.kde).len();
    let observed = if modes == 2 { worst } else { f64::INFINITY };
    Ok(CheckResult::new(
        "kde_flatness",
        1e-8,
        observed,
        SAMPLES.len(),
        format!("max |weighted kde - 1| at the samples; uniform kde has {modes} local maxima"),
    ))
}

pub fn nearest_node(grid: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - x).abs() < (grid[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// The PPK at ρ = 1 with bandwidth σ/√2 is a constant multiple of the GMK
/// with bandwidth σ.
pub fn check_ppk_gmk(seed: u64) -> Result<CheckResult> {
    let sigma = 1.5;
    let mut ratios = Vec::new();
    let mut unconverged = 0;
    for i in 0..5 {
        let mut rng = fixtures::rng(seed.wrapping_add(6000 + i));
        let (m, n) = (rng.random_range(2..=12), rng.random_range(2..=12));
        let x = DescriptorSet::from_scalars(&draw(&mut rng, m))?;
        let y = DescriptorSet::from_scalars(&draw(&mut rng, n))?;
        let h = sigma / SQRT_2;
        let p = Kde::uniform(x.clone(), h)?;
        let q = Kde::uniform(y.clone(), h)?;
        let v = ppk(&p, &q, 1.0, &QuadratureGrid::covering(&[&p, &q])?)?;
        unconverged += usize::from(!v.converged);
        ratios.push(v.value / gmk(&x, &y, sigma)?);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let observed = if unconverged == 0 {
        (hi - lo) / mean
    } else {
        f64::INFINITY
    };
    Ok(CheckResult::new(
        "ppk_proportional_to_gmk",
        1e-4,
        observed,
        ratios.len(),
        format!("(max - min) / mean of ppk/gmk; mean ratio {mean}, {unconverged} unconverged quadratures"),
    ))
}

fn draw(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-6.0..6.0)).collect()
}

pub fn run_checks(seed: u64, fault: Option<Fault>) -> Result<VerifyReport> {
    let checks = vec![
        check_bov_max(seed)?,
        check_orthonormal_theorem(seed)?,
        check_primal_dual(seed, fault)?,
        check_block_dense(seed, fault)?,
        check_cg_direct(seed)?,
        check_sum_limit(seed)?,
        check_kde_flatness()?,
        check_ppk_gmk(seed)?,
    ];
    let passed = checks.iter().filter(|c| c.passed).count();
    Ok(VerifyReport {
        seed,
        fault,
        passed,
        total: checks.len(),
        all_passed: passed == checks.len(),
        checks,
    })
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| {
                format!(
                    "{} (observed {:e}, tolerance {:e})",
                    c.name, c.observed, c.tolerance
                )
            })
            .collect()
    }
}
