use proptest::prelude::*;

use super::*;
use crate::distributions::ReferenceDensity;
use crate::pointsets::Provenance;

struct Shifted<'a>(&'a MixtureSpec, f64);

impl LogDensity for Shifted<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.0.log_density(x)? + self.1)
    }
}

struct Nowhere;

impl LogDensity for Nowhere {
    fn dim(&self) -> usize {
        2
    }
    fn log_density(&self, _: &[f64]) -> Result<f64> {
        Ok(f64::NEG_INFINITY)
    }
}

fn small_cfg() -> LaisConfig {
    LaisConfig {
        chains: 4,
        steps: 10,
        samples_per_component: 20,
        seed: 7,
        ..LaisConfig::default()
    }
}

fn gaussian_1d(mean: f64, sd: f64) -> MixtureSpec {
    MixtureSpec::gaussian(
        vec![1.0],
        vec![vec![mean]],
        vec![Matrix::scaled_identity(1, sd)],
    )
    .unwrap()
}

#[test]
fn demo_target_mean_and_components() {
    let t = demo_target();
    assert_eq!(t.num_components(), 5);
    let m = t.moments().unwrap();
    assert!((m.mean[0] - 0.4).abs() < 1e-15 && (m.mean[1] - 0.35).abs() < 1e-15);
    let g = t.scales()[2].matrix().gram();
    assert!(
        (g[(0, 0)] - 0.5).abs() < 1e-15
            && (g[(0, 1)] - 0.2).abs() < 1e-15
            && (g[(1, 1)] - 0.5).abs() < 1e-15
    );
}

#[test]
fn upper_layer_collects_thinned_states() {
    let t = demo_target();
    let cfg = LaisConfig {
        chains: 3,
        steps: 12,
        burn_in: 2,
        stride: 3,
        ..small_cfg()
    };
    let layer = upper_layer(&t, &cfg).unwrap();
    assert_eq!(layer.centers.len(), 3 * 3);
    assert_eq!(layer.proposed, 36);
    assert!(layer.accepted <= layer.proposed);
    assert_eq!(layer.non_finite, 0);
    assert_eq!(layer, upper_layer(&t, &cfg).unwrap());
    let other = upper_layer(&t, &LaisConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(layer.centers, other.centers);
}

#[test]
fn chains_reject_non_finite_targets() {
    let cfg = small_cfg();
    let layer = upper_layer(&Nowhere, &cfg).unwrap();
    assert_eq!(layer.accepted, 0);
    assert_eq!(layer.non_finite, layer.proposed);
}

#[test]
fn config_validation_and_json() {
    assert!(LaisConfig {
        chains: 0,
        ..small_cfg()
    }
    .validate()
    .is_err());
    assert!(LaisConfig {
        burn_in: 10,
        ..small_cfg()
    }
    .validate()
    .is_err());
    assert!(LaisConfig {
        kernel_sigma: 0.0,
        ..small_cfg()
    }
    .validate()
    .is_err());
    let cfg: LaisConfig = serde_json::from_str(r#"{"chains": 5, "kernel_sigma": 0.5}"#).unwrap();
    assert_eq!((cfg.chains, cfg.kernel_sigma, cfg.steps), (5, 0.5, 20));
    assert!(serde_json::from_str::<LaisConfig>(r#"{"chain": 5}"#).is_err());
}

#[test]
fn proposal_is_equal_weight_isotropic_mixture() {
    let centers = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
    let p = build_proposal(&centers, 0.7).unwrap();
    assert_eq!(p.weights(), &[1.0 / 3.0; 3]);
    assert_eq!(p.shifts(), centers.as_slice());
    assert_eq!(p.reference(), ReferenceDensity::StandardNormal { dim: 2 });
    assert!(p
        .scales()
        .iter()
        .all(|s| s.matrix() == &Matrix::scaled_identity(2, 0.7)));
    assert!(build_proposal(&[], 1.0).is_err());
}

#[test]
fn stratified_layer_draws_m_per_center() {
    let centers = vec![vec![-50.0, 0.0], vec![50.0, 0.0]];
    let cfg = LaisConfig {
        samples_per_component: 13,
        ..small_cfg()
    };
    let pts = stratified_lower_layer(&centers, &cfg).unwrap();
    assert_eq!(pts.len(), 26);
    assert!(pts.points()[..13].iter().all(|p| p[0] < 0.0));
    assert!(pts.points()[13..].iter().all(|p| p[0] > 0.0));
    assert!(pts.has_uniform_weights());
}

#[test]
fn snis_is_exact_when_proposal_equals_target() {
    let t = demo_target();
    let pts = WeightedPointSet::uniform(
        2,
        vec![vec![0.1, 0.2], vec![-1.0, 3.0], vec![2.0, -0.5]],
        Provenance::Mc,
    )
    .unwrap();
    let r = snis(&t, &t, &pts, |z| z.to_vec()).unwrap();
    assert!((r.estimate[0] - 1.1 / 3.0).abs() < 1e-14);
    assert!((r.estimate[1] - 2.7 / 3.0).abs() < 1e-14);
    assert!((r.ess - 3.0).abs() < 1e-12);
    assert_eq!(r.n_total, 3);
}

#[test]
fn degenerate_weights_are_reported() {
    let p = build_proposal(&[vec![0.0, 0.0]], 1.0).unwrap();
    let pts = WeightedPointSet::uniform(2, vec![vec![0.0, 0.0]; 4], Provenance::Mc).unwrap();
    assert!(matches!(
        snis(&Nowhere, &p, &pts, |z| z.to_vec()),
        Err(Error::DegenerateWeights)
    ));
}

#[test]
fn both_methods_recover_a_gaussian_mean() {
    // a single well-mixed mode; the self-normalised estimate is consistent
    let t = gaussian_1d(1.5, 0.6);
    let cfg = LaisConfig {
        chains: 4,
        steps: 30,
        samples_per_component: 200,
        seed: 3,
        ..LaisConfig::default()
    };
    let dm = dm_lais(&t, &cfg, |z| vec![z[0], z[0] * z[0]]).unwrap();
    let tq = tqmc_lais(&t, &cfg, |z| vec![z[0], z[0] * z[0]]).unwrap();
    // n = 24000 stratified draws: 5 standard errors of the mean is about 0.02
    assert!((dm.estimate[0] - 1.5).abs() < 0.02, "{:?}", dm.estimate);
    assert!((dm.estimate[1] - (1.5f64.powi(2) + 0.36)).abs() < 0.1);
    assert!((tq.estimate[0] - 1.5).abs() < 2e-3, "{:?}", tq.estimate);
    assert!((tq.estimate[1] - (1.5f64.powi(2) + 0.36)).abs() < 1e-2);
    assert_eq!(dm.n_total, tq.n_total);
}

#[test]
fn transported_layer_follows_the_proposal() {
    let centers = vec![vec![-1.0, 0.0], vec![2.0, 1.0]];
    let p = build_proposal(&centers, 0.5).unwrap();
    let pts = transported_lower_layer(&p, &LaisConfig::default(), 4096).unwrap();
    let m = pts.points().iter().fold([0.0, 0.0], |a, z| {
        [a[0] + z[0] / 4096.0, a[1] + z[1] / 4096.0]
    });
    assert!(
        (m[0] - 0.5).abs() < 5e-3 && (m[1] - 0.5).abs() < 5e-3,
        "{m:?}"
    );
    assert_eq!(pts.provenance(), Provenance::Transported);
}

#[test]
fn sweep_rows_and_slopes() {
    let t = demo_target();
    let base = LaisConfig {
        chains: 2,
        steps: 5,
        ..LaisConfig::default()
    };
    let recs = lais_sweep(
        &t,
        &base,
        Sweep::Samples,
        &[2, 4, 8, 16],
        &[0, 1],
        &[0.4, 0.35],
    )
    .unwrap();
    assert_eq!(recs.len(), 4 * 2 * 2);
    assert!(recs
        .iter()
        .all(|r| r.n_total == 10 * r.samples_per_component && r.ess <= r.n_total as f64 + 1e-9));
    assert!(sweep_slope(&recs, LaisMethod::Dm).unwrap().is_finite());
    let row = recs[0].csv_row();
    assert_eq!(row.split(',').count(), LAIS_CSV_HEADER.split(',').count());
    assert!(row.starts_with("dm-lais,2,5,2,20,0,"));
    let steps = lais_sweep(&t, &base, Sweep::Steps, &[3, 6], &[0], &[0.4, 0.35]).unwrap();
    assert_eq!(
        steps.iter().map(|r| r.n_total).collect::<Vec<_>>(),
        vec![600, 600, 1200, 1200]
    );
    assert!(lais_sweep(&t, &base, Sweep::Steps, &[3], &[0], &[0.4]).is_err());
    assert_eq!("tqmc".parse::<LaisMethod>().unwrap(), LaisMethod::Tqmc);
}

#[test]
fn one_step_chains_give_one_center_each() {
    let cfg = LaisConfig {
        chains: 6,
        steps: 1,
        ..small_cfg()
    };
    assert_eq!(upper_layer(&demo_target(), &cfg).unwrap().centers.len(), 6);
}

#[test]
fn random_walk_acceptance_rate_on_standard_normal() {
    let t = gaussian_1d(0.0, 1.0);
    let cfg = LaisConfig {
        chains: 1,
        steps: 10_000,
        proposal_sigma: 2.4,
        ..small_cfg()
    };
    let rate = upper_layer(&t, &cfg).unwrap().acceptance_rate();
    assert!((0.2..=0.7).contains(&rate), "{rate}");
}

#[test]
fn proposal_mean_is_average_of_centers() {
    let centers = vec![
        vec![1.0, -2.0],
        vec![3.0, 0.5],
        vec![-0.5, 0.0],
        vec![0.0, 4.0],
    ];
    let m = build_proposal(&centers, 1.3).unwrap().moments().unwrap();
    assert!((m.mean[0] - 0.875).abs() < 1e-15 && (m.mean[1] - 0.625).abs() < 1e-15);
    let one = build_proposal(&centers[..1], 0.5)
        .unwrap()
        .moments()
        .unwrap();
    assert!((one.covariance[(0, 0)] - 0.25).abs() < 1e-15 && one.covariance[(0, 1)] == 0.0);
}

#[test]
fn constant_integrand_gives_one() {
    let t = demo_target();
    let cfg = small_cfg();
    assert_eq!(
        dm_lais(&t, &cfg, |_| vec![1.0]).unwrap().estimate,
        vec![1.0]
    );
    assert_eq!(
        tqmc_lais(&t, &cfg, |_| vec![1.0]).unwrap().estimate,
        vec![1.0]
    );
}

#[test]
fn dm_lais_demo_mean_within_four_standard_errors() {
    let t = demo_target();
    let cfg = LaisConfig {
        seed: 11,
        ..LaisConfig::default()
    };
    let layer = upper_layer(&t, &cfg).unwrap();
    let proposal = build_proposal(&layer.centers, cfg.kernel_sigma).unwrap();
    let pts = stratified_lower_layer(&layer.centers, &cfg).unwrap();
    let r = snis(&t, &proposal, &pts, |z| z.to_vec()).unwrap();
    assert_eq!(r.n_total, 10 * 20 * 100);
    let lw: Vec<f64> = pts
        .points()
        .iter()
        .map(|z| t.log_density(z).unwrap() - proposal.log_density(z).unwrap())
        .collect();
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    for (k, truth) in [0.4, 0.35].into_iter().enumerate() {
        let var: f64 = w
            .iter()
            .zip(pts.points())
            .map(|(wi, z)| (wi / total).powi(2) * (z[k] - r.estimate[k]).powi(2))
            .sum();
        let se = var.sqrt();
        assert!(
            (r.estimate[k] - truth).abs() <= 4.0 * se,
            "coordinate {k}: {} vs {truth}, se {se}",
            r.estimate[k]
        );
    }
}

#[test]
fn tqmc_single_center_recovers_the_center() {
    let m = vec![0.7, -1.2];
    let proposal = build_proposal(std::slice::from_ref(&m), 0.8).unwrap();
    let cfg = LaisConfig {
        samples_per_component: 4096,
        kernel_sigma: 0.8,
        ..LaisConfig::default()
    };
    let r =
        tqmc_lais_with_centers(&proposal, std::slice::from_ref(&m), &cfg, |z| z.to_vec()).unwrap();
    assert!(
        (r.estimate[0] - m[0]).abs() < 1e-3 && (r.estimate[1] - m[1]).abs() < 1e-3,
        "{:?}",
        r.estimate
    );
    assert!((r.ess - 4096.0).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snis_ignores_target_normalisation(shift in -50.0f64..50.0, seed in 0u64..1000) {
        let t = demo_target();
        let cfg = LaisConfig { seed, chains: 2, steps: 4, samples_per_component: 5, ..LaisConfig::default() };
        let layer = upper_layer(&t, &cfg).unwrap();
        let a = dm_lais_with_centers(&t, &layer.centers, &cfg, |z| z.to_vec()).unwrap();
        let b = dm_lais_with_centers(&Shifted(&t, shift), &layer.centers, &cfg, |z| z.to_vec()).unwrap();
        for (x, y) in a.estimate.iter().zip(&b.estimate) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        prop_assert!((a.ess - b.ess).abs() <= 1e-9 * a.ess);
    }

    #[test]
    fn ess_is_between_one_and_n(points in prop::collection::vec(prop::array::uniform2(-6.0f64..6.0), 1..40)) {
        let t = demo_target();
        let p = build_proposal(&[vec![0.0, 0.0]], 2.0).unwrap();
        let n = points.len();
        let pts = WeightedPointSet::uniform(2, points.iter().map(|a| a.to_vec()).collect(), Provenance::Mc).unwrap();
        let r = snis(&t, &p, &pts, |z| z.to_vec()).unwrap();
        prop_assert!(r.ess >= 1.0 - 1e-12 && r.ess <= n as f64 * (1.0 + 1e-12));
    }
}
