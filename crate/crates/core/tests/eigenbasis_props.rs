mod common;

use nalgebra::DMatrix;
use psfggm::eigenbasis::{compute_scores, eigendecompose, project_scores};
use psfggm::fdata::{estimate_mean, pooled_covariance, TimeGrid};
use psfggm::simgen::{fourier_basis, generate_model, gen_samples, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn score_covariance_matches_cross_kernel_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (p, t, n) = (rng.random_range(1..=3), rng.random_range(2..=8), rng.random_range(2..=10));
        let grid = common::random_grid(&mut rng, t);
        let data = common::random_dataset(&mut rng, grid.clone(), n, p);
        let mean = estimate_mean(&data);
        let basis = eigendecompose(&pooled_covariance(&data, &mean).unwrap(), &grid).unwrap();
        let l_count = basis.len();
        let scores = compute_scores_raw(&data, &mean, &basis, l_count);
        for j in 0..p {
            for k in 0..p {
                let g = common::cross_kernel(&data, j, k);
                for (l, s) in scores.iter().enumerate() {
                    let phi = basis.function(l);
                    let oracle = common::double_quadrature(&g, &phi, &phi, &grid);
                    assert!((s[(j, k)] - oracle).abs() <= 1e-10, "l={l} j={j} k={k}: {} vs {oracle}", s[(j, k)]);
                }
            }
        }
    }
}

/// Score covariances for every basis, including those with zero variance.
fn compute_scores_raw(
    data: &psfggm::fdata::FunctionalDataset,
    mean: &psfggm::fdata::MeanEstimate,
    basis: &psfggm::eigenbasis::EigenBasis,
    l_count: usize,
) -> Vec<DMatrix<f64>> {
    let n = data.n_subjects() as f64;
    project_scores(data, mean, basis, l_count)
        .unwrap()
        .into_iter()
        .map(|theta| theta.tr_mul(&theta) / n)
        .collect()
}

#[test]
fn pooled_basis_retains_most_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (p, t, n) = (rng.random_range(1..=4), rng.random_range(4..=10), rng.random_range(3..=15));
        let grid = common::random_grid(&mut rng, t);
        let data = common::random_dataset(&mut rng, grid.clone(), n, p);
        let mean = estimate_mean(&data);
        let basis = eigendecompose(&pooled_covariance(&data, &mean).unwrap(), &grid).unwrap();
        for l in 1..=t.min(4) {
            let funcs = common::random_orthonormal(&mut rng, &grid, l);
            let mut retained = 0.0;
            for f in &funcs {
                for j in 0..p {
                    let proj: Vec<f64> = (0..n)
                        .map(|i| {
                            let c: Vec<f64> = data.curve(i, j).iter().zip(mean.component(j)).map(|(y, m)| y - m).collect();
                            grid.inner(&c, f)
                        })
                        .collect();
                    retained += proj.iter().map(|v| v * v).sum::<f64>() / n as f64;
                }
            }
            let bound: f64 = basis.eigenvalues[..l].iter().sum::<f64>() * p as f64;
            assert!(retained <= bound + 1e-8, "L={l}: {retained} > {bound}");
        }
    }
}

fn noiseless(n: usize, seed: u64) -> SimConfig {
    SimConfig {
        n,
        noise_fraction: 0.0,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn eigenfunctions_recover_generating_basis() {
    let config = noiseless(1000, 21);
    let mut rng = config.rng();
    let model = generate_model(&config, &mut rng).unwrap();
    let data = gen_samples(&model, &config, &mut rng).unwrap();
    let mean = estimate_mean(&data);
    let basis = eigendecompose(&pooled_covariance(&data, &mean).unwrap(), data.grid()).unwrap();
    let grid = TimeGrid::uniform(config.n_points).unwrap();
    let truth = fourier_basis(config.n_basis, &grid);
    for l in 0..3 {
        let phi: Vec<f64> = truth.row(l).iter().copied().collect();
        let overlap = grid.inner(&basis.function(l), &phi).abs();
        assert!(overlap >= 0.95, "basis {}: |<phi_hat, phi>| = {overlap}", l + 1);
    }
}

#[test]
fn scores_uncorrelated_across_bases() {
    let config = noiseless(500, 8);
    let mut rng = config.rng();
    let model = generate_model(&config, &mut rng).unwrap();
    let data = gen_samples(&model, &config, &mut rng).unwrap();
    let mean = estimate_mean(&data);
    let basis = eigendecompose(&pooled_covariance(&data, &mean).unwrap(), data.grid()).unwrap();
    let l_count = 4;
    let scores = compute_scores(&data, &mean, &basis, l_count).unwrap().scores;
    let n = config.n as f64;
    let bound = 4.0 / n.sqrt();
    let p = config.p;
    let (mut within, mut total) = (0usize, 0usize);
    let mut pick = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..2000 {
        let l = pick.random_range(0..l_count);
        let m = (l + pick.random_range(1..l_count)) % l_count;
        let (j, k) = (pick.random_range(0..p), pick.random_range(0..p));
        let a = scores[l].column(j);
        let b = scores[m].column(k);
        let (ma, mb) = (a.mean(), b.mean());
        let cov: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let r = cov / (va * vb).sqrt();
        total += 1;
        if r.abs() <= bound {
            within += 1;
        }
    }
    let frac = within as f64 / total as f64;
    assert!(frac >= 0.95, "only {frac:.3} of cross-basis correlations within 4/sqrt(n)");
}
