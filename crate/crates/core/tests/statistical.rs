//! Seeded end-to-end checks on synthetic populations.

use fairstream::fairpca::{estimate_unfair_subspace, fit, FnpmConfig};
use fairstream::linalg::{leading_basis, qr_orthonormalize, sin_distance, symmetric_eig, DenseMatrix, EigenOrder};
use fairstream::metrics::{
    fairness_spectral_norm, mmd_squared, pafo_probe, Kernel, MmdEstimator, ProbeConfig, ProbeGridPoint,
};
use fairstream::oracle::{offline_fair_pca, population_statistics};
use fairstream::stream::{PerGroup, Rotation, SampleStream, SyntheticSpec};
use fairstream::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn spec(seed: u64) -> SyntheticSpec {
    let d = 16;
    let mut mu1 = vec![0.0; d];
    mu1[0] = 0.8;
    mu1[3] = -0.6;
    SyntheticSpec {
        dim: d,
        p: 0.4,
        mu1,
        alpha: PerGroup::Split([2.0, 3.0]),
        scale: PerGroup::Split([20.0, 30.0]),
        rotation_seed: seed,
        sample_seed: seed + 1,
        rotation: Rotation::Dense,
    }
}

#[test]
fn second_moment_basis_recovers_population_subspace() {
    let spec = spec(21);
    let stats = population_statistics(&spec).unwrap();
    let pairs = symmetric_eig(&stats.moment_gap(), EigenOrder::ByMagnitude).unwrap();
    let p_m = leading_basis(&pairs, 2).unwrap();
    let cfg = FnpmConfig::new(2, 2, 5000, 5000, 30, 1).with_seed(3);
    let unfair = estimate_unfair_subspace(&mut spec.stream().unwrap(), &cfg).unwrap();
    let sin = sin_distance(&p_m, &unfair.second_moment_basis).unwrap();
    assert!(sin <= 0.05, "sin = {sin}");
}

#[test]
fn doubling_the_block_does_not_lower_the_success_rate() {
    let spec = spec(5);
    let grid = [
        ProbeGridPoint::new(250, 250, 20, 20),
        ProbeGridPoint::new(500, 500, 20, 20),
        ProbeGridPoint::new(1000, 1000, 20, 20),
    ];
    let cfg = ProbeConfig::new(2, 1, 0.5, 0.2, 50, 77);
    let result = pafo_probe(&spec, &grid, &cfg).unwrap();
    let rates: Vec<f64> = result.points.iter().map(|p| p.success_rate).collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "rates {rates:?}");
    assert!(rates[rates.len() - 1] > 0.5, "rates {rates:?}");
}

#[test]
fn linear_mmd_is_squared_gap_of_projected_means() {
    let spec = spec(9);
    let cfg = FnpmConfig::new(2, 1, 2000, 2000, 10, 10).with_seed(1);
    let model = fit(&mut spec.stream().unwrap(), &cfg, false).unwrap();

    let mut stream = spec.with_sample_seed(500).stream().unwrap();
    let mut rows = [Vec::new(), Vec::new()];
    for _ in 0..3000 {
        let s = stream.next_sample().unwrap().unwrap();
        rows[s.group()].extend(model.transform(&s.features).unwrap());
    }
    let [r0, r1] = rows;
    let g0 = DenseMatrix::from_row_major(r0.len() / 2, 2, r0).unwrap();
    let g1 = DenseMatrix::from_row_major(r1.len() / 2, 2, r1).unwrap();
    let mean = |g: &DenseMatrix| -> Vec<f64> {
        (0..2).map(|j| g.column(j).iter().sum::<f64>() / g.rows() as f64).collect()
    };
    let (m0, m1) = (mean(&g0), mean(&g1));
    let expected: f64 = m0.iter().zip(&m1).map(|(a, b)| (a - b).powi(2)).sum();
    let got = mmd_squared(&g0, &g1, Kernel::Linear, MmdEstimator::Biased, Execution::Sequential).unwrap();
    assert!((got - expected).abs() <= 1e-9 * expected.max(1.0), "{got} vs {expected}");
}

#[test]
fn tiny_budget_fits_are_no_better_than_random_loadings() {
    let spec = SyntheticSpec {
        alpha: PerGroup::Split([1.0, 1.2]),
        scale: PerGroup::Split([4.0, 5.0]),
        ..spec(13)
    };
    let (k, m, eps_f) = (2, 1, 0.5);
    let cfg = ProbeConfig::new(k, m, f64::INFINITY, eps_f, 50, 3);
    let grid = [ProbeGridPoint::new(1, 1, 1, 1), ProbeGridPoint::new(8, 8, 1, 1)];
    let result = pafo_probe(&spec, &grid, &cfg).unwrap();
    // A one-sample block never sees both groups, so every trial fails.
    assert_eq!(result.points[0].errors, 50);
    let probe_rate = result.points[1].success_rate;

    let stats = population_statistics(&spec).unwrap();
    let (unfair, _, _) = offline_fair_pca(&stats, m, k, cfg.g_threshold).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws = 2000;
    let fair = (0..draws)
        .filter(|_| {
            let g = (0..spec.dim * k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let v = qr_orthonormalize(&DenseMatrix::from_row_major(spec.dim, k, g).unwrap()).unwrap();
            fairness_spectral_norm(&unfair.basis, &v).unwrap() <= eps_f
        })
        .count();
    let baseline = fair as f64 / draws as f64;
    println!("tiny-budget probe {probe_rate:.2}, random baseline {baseline:.2}, errors {}", result.points[1].errors);
    assert!(probe_rate <= baseline + 0.2, "probe {probe_rate} vs baseline {baseline}");
}
