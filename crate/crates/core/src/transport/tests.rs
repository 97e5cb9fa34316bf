use super::*;
use crate::distributions::{three_gaussians, MixtureSpec};
use crate::linalg::Matrix;
use crate::pointsets::mc_points;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single(a: Vec<f64>, m: Matrix) -> MixtureSpec {
    MixtureSpec::gaussian(vec![1.0], vec![a], vec![m]).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Independent evaluation of `v_t(x)` and `log ρ_t(x)` with explicit inverses.
fn nalgebra_field(spec: &MixtureSpec, t: f64, x: &[f64]) -> (Vec<f64>, f64) {
    let d = spec.dim();
    let xv = DVector::from_column_slice(x);
    let mut rho = 0.0;
    let mut acc = DVector::zeros(d);
    for j in 0..spec.num_components() {
        let a = DMatrix::from_row_slice(d, d, spec.scales()[j].matrix().as_slice());
        let at = &a * t + DMatrix::identity(d, d) * (1.0 - t);
        let inv = at.clone().try_inverse().unwrap();
        let shift = DVector::from_column_slice(&spec.shifts()[j]);
        let y = &inv * (&xv - &shift * t);
        let dens = (-0.5 * y.norm_squared()).exp()
            / (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0)
            / at.determinant().abs();
        let v = &shift + (&a - DMatrix::identity(d, d)) * &y;
        rho += spec.weights()[j] * dens;
        acc += v * (spec.weights()[j] * dens);
    }
    ((acc / rho).iter().copied().collect(), rho.ln())
}

#[test]
fn velocity_at_time_zero_is_weighted_affine() {
    let spec = three_gaussians();
    let x = [0.4, -1.3];
    let v = velocity(&spec, 0.0, &x).unwrap();
    let mut want = [0.0; 2];
    for j in 0..3 {
        let ax = spec.scales()[j].matrix().mul_vec(&x);
        for i in 0..2 {
            want[i] += spec.weights()[j] * (spec.shifts()[j][i] + ax[i] - x[i]);
        }
    }
    assert!(close(&v, &want, 1e-14), "{v:?} vs {want:?}");
}

#[test]
fn single_component_velocity_closed_form() {
    let m = Matrix::from_rows(&[vec![1.5, 0.0], vec![0.4, 0.7]]).unwrap();
    let spec = single(vec![0.3, -2.0], m.clone());
    for &t in &[0.0, 0.25, 0.9, 1.0] {
        let x = [1.1, -0.2];
        let v = velocity(&spec, t, &x).unwrap();
        let (want, _) = nalgebra_field(&spec, t, &x);
        assert!(close(&v, &want, 1e-13), "t={t}");
    }
}

#[test]
fn three_gaussians_field_at_half_time() {
    let spec = three_gaussians();
    let v = velocity(&spec, 0.5, &[0.0, 0.0]).unwrap();
    let (oracle, log_rho) = nalgebra_field(&spec, 0.5, &[0.0, 0.0]);
    assert!(close(&v, &oracle, 1e-14));
    // 40-digit mpmath evaluation
    assert!(close(
        &v,
        &[-0.18145752554498507, -1.0553105329423371],
        1e-14
    ));
    let l = intermediate_log_density(&spec, 0.5, &[0.0, 0.0]).unwrap();
    assert!((l - log_rho).abs() < 1e-14);
    assert!((l + 2.101428211960495).abs() < 1e-14);
}

#[test]
fn field_matches_explicit_inverse_on_dense_scales() {
    let spd = Matrix::from_rows(&[
        vec![1.2, 0.5, 0.1],
        vec![0.5, 0.9, -0.2],
        vec![0.1, -0.2, 0.6],
    ])
    .unwrap();
    let spec = MixtureSpec::gaussian(
        vec![0.6, 0.4],
        vec![vec![1.0, 0.0, -1.0], vec![-0.5, 0.5, 0.0]],
        vec![spd, Matrix::diagonal(&[0.5, 2.0, 1.0])],
    )
    .unwrap();
    let x = [0.3, -0.7, 1.4];
    for &t in &[0.1, 0.5, 0.77] {
        let v = velocity(&spec, t, &x).unwrap();
        let (want, log_rho) = nalgebra_field(&spec, t, &x);
        assert!(close(&v, &want, 1e-12));
        let state = IntermediateState::new(&spec, t).unwrap();
        assert!((state.log_density(&x).unwrap() - log_rho).abs() < 1e-12);
    }
}

#[test]
fn intermediate_density_endpoints() {
    let spec = three_gaussians();
    let x = [0.7, 2.1];
    let reference = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (0.49 + 4.41);
    assert!((intermediate_log_density(&spec, 0.0, &x).unwrap() - reference).abs() < 1e-14);
    assert!(
        (intermediate_log_density(&spec, 1.0, &x).unwrap() - spec.log_density(&x).unwrap()).abs()
            < 1e-14
    );
    assert!(intermediate_log_density(&spec, 1.5, &x).is_err());
}

#[test]
fn velocity_far_from_all_components_is_finite() {
    let spec = three_gaussians();
    let v = velocity(&spec, 0.6, &[35.0, -28.0]).unwrap();
    assert!(v.iter().all(|c| c.is_finite()));
}

#[test]
fn transports_single_components_exactly() {
    let cfg = TransportConfig::default();
    let spec = single(vec![2.0, -1.0], Matrix::scaled_identity(2, 2.0 / 3.0));
    assert!(close(
        &transport_point(&spec, &cfg, &[0.0, 0.0]).unwrap(),
        &[2.0, -1.0],
        1e-10
    ));

    let spec = single(vec![0.0, 0.0], Matrix::identity(2));
    assert!(close(
        &transport_point(&spec, &cfg, &[0.3, -4.0]).unwrap(),
        &[0.3, -4.0],
        1e-12
    ));

    let spec = single(vec![1.0, 0.0], Matrix::diagonal(&[2.0, 0.5]));
    let y = transport_point(&spec, &cfg, &[0.3, -0.5]).unwrap();
    assert!(close(&y, &[1.6, -0.25], 1e-9), "{y:?}");
}

#[test]
fn flow_at_intermediate_time_is_interpolated_affine() {
    let m = Matrix::from_rows(&[vec![1.5, 0.0], vec![0.4, 0.7]]).unwrap();
    let spec = single(vec![0.3, -2.0], m.clone());
    let x0 = [0.8, 0.1];
    let got = flow(&spec, &TransportConfig::default(), &x0, 0.4).unwrap();
    let at = spec.scales()[0].interpolated(0.4);
    let mut want = at.mul_vec(&x0);
    want[0] += 0.4 * 0.3;
    want[1] -= 0.4 * 2.0;
    assert!(close(&got, &want, 1e-9));
}

#[test]
fn rk4_and_dopri_agree() {
    let spec = three_gaussians();
    let pts = mc_points(2, 100, &mut ChaCha8Rng::seed_from_u64(5));
    let fixed = TransportConfig::rk4(256);
    let adaptive = TransportConfig::default();
    for p in pts.points() {
        let a = transport_point(&spec, &fixed, p).unwrap();
        let b = transport_point(&spec, &adaptive, p).unwrap();
        assert!(close(&a, &b, 1e-7), "{p:?}: {a:?} vs {b:?}");
    }
}

#[test]
fn one_dimensional_flows_do_not_cross() {
    let two = MixtureSpec::gaussian(
        vec![0.35, 0.65],
        vec![vec![-2.0], vec![1.5]],
        vec![Matrix::diagonal(&[0.4]), Matrix::diagonal(&[1.3])],
    )
    .unwrap();
    let one = single(vec![0.5], Matrix::diagonal(&[0.2]));
    let cfg = TransportConfig::default();
    for spec in [one, two] {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..200 {
            let x0 = -5.0 + 0.05 * i as f64;
            let y = transport_point(&spec, &cfg, &[x0]).unwrap()[0];
            assert!(y > prev, "x0={x0}");
            prev = y;
        }
    }
}

#[test]
fn step_limit_raises_stiffness_with_state() {
    let cfg = TransportConfig {
        max_steps: 1,
        ..TransportConfig::default()
    };
    match transport_point(&three_gaussians(), &cfg, &[0.5, 0.5]) {
        Err(Error::Stiffness { max_steps: 1, t, x }) => {
            assert!(t < 1.0);
            assert_eq!(x.len(), 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_config_is_rejected() {
    let spec = three_gaussians();
    let bad = TransportConfig {
        steps: 0,
        ..TransportConfig::rk4(1)
    };
    assert!(transport_point(&spec, &bad, &[0.0, 0.0]).is_err());
    let bad = TransportConfig {
        abs_tol: 0.0,
        ..TransportConfig::default()
    };
    assert!(transport_point(&spec, &bad, &[0.0, 0.0]).is_err());
    assert!(transport_point(&spec, &TransportConfig::default(), &[f64::NAN, 0.0]).is_err());
}

#[test]
fn config_json_defaults_and_unknown_keys() {
    let cfg: TransportConfig =
        serde_json::from_str(r#"{"scheme":"dopri45","abs_tol":1e-10,"rel_tol":1e-10}"#).unwrap();
    assert_eq!(cfg, TransportConfig::default());
    let cfg: TransportConfig = serde_json::from_str(r#"{"scheme":"rk4"}"#).unwrap();
    assert_eq!(cfg.steps, 64);
    assert!(serde_json::from_str::<TransportConfig>(r#"{"scheme":"euler"}"#).is_err());
    assert!(serde_json::from_str::<TransportConfig>(r#"{"tol":1}"#).is_err());
}

#[test]
fn set_transport_keeps_weights_and_order() {
    let spec = three_gaussians();
    let cfg = TransportConfig::rk4(32);
    let empty = WeightedPointSet::empty(2, Provenance::Mc);
    assert!(transport_set(&spec, &cfg, &empty).unwrap().is_empty());

    let grid =
        crate::pointsets::smolyak_grid(crate::pointsets::SparseGridLevel::gauss_hermite(6, 2))
            .unwrap();
    let seq = transport_set_with(&spec, &cfg, &grid, Execution::Sequential).unwrap();
    let par = transport_set_with(&spec, &cfg, &grid, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.weights(), grid.weights());
    assert_eq!(seq.provenance(), Provenance::Transported);
    for (p, q) in grid.points().iter().zip(seq.points()) {
        assert!(close(&transport_point(&spec, &cfg, p).unwrap(), q, 1e-13));
    }
}

#[test]
fn shared_stage_table_matches_per_point_flow_on_dense_scales() {
    let spd = Matrix::from_rows(&[
        vec![1.2, 0.5, 0.1],
        vec![0.5, 0.9, -0.2],
        vec![0.1, -0.2, 0.6],
    ])
    .unwrap();
    let spec = MixtureSpec::gaussian(
        vec![0.6, 0.4],
        vec![vec![1.0, 0.0, -1.0], vec![-0.5, 0.5, 0.0]],
        vec![spd, Matrix::diagonal(&[0.5, 2.0, 1.0])],
    )
    .unwrap();
    let pts = mc_points(3, 20, &mut ChaCha8Rng::seed_from_u64(4));
    for steps in [1, 7, 16] {
        let cfg = TransportConfig::rk4(steps);
        for t in [0.37, 1.0] {
            let set = flow_set_with(&spec, &cfg, &pts, t, Execution::Sequential).unwrap();
            for (p, q) in pts.points().iter().zip(set.points()) {
                assert!(close(&flow(&spec, &cfg, p, t).unwrap(), q, 1e-13));
            }
        }
    }
}

#[test]
fn rk4_stage_times_cover_each_step() {
    let times = ode::rk4_stage_times(4, 1.0);
    assert_eq!(
        times,
        vec![0.0, 0.125, 0.25, 0.25, 0.375, 0.5, 0.5, 0.625, 0.75, 0.75, 0.875, 1.0, 1.0]
    );
}

#[test]
fn set_transport_reports_failing_index() {
    let spec = three_gaussians();
    let cfg = TransportConfig {
        max_steps: 3,
        ..TransportConfig::default()
    };
    let pts = WeightedPointSet::uniform(2, vec![vec![0.0, 0.0]; 4], Provenance::Mc).unwrap();
    match transport_set(&spec, &cfg, &pts) {
        Err(Error::TransportFailed { index: 0, source }) => {
            assert!(matches!(*source, Error::Stiffness { .. }))
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn traced_transport_records_accepted_steps() {
    let spec = three_gaussians();
    let pts = mc_points(2, 3, &mut ChaCha8Rng::seed_from_u64(9));
    let (out, steps) =
        transport_set_traced(&spec, &TransportConfig::rk4(8), &pts, Execution::Parallel).unwrap();
    assert_eq!(steps.len(), 3 * 9);
    for i in 0..3 {
        let mine: Vec<_> = steps.iter().filter(|s| s.index == i).collect();
        assert_eq!(mine.first().unwrap().t, 0.0);
        assert_eq!(mine.first().unwrap().x, pts.points()[i]);
        assert_eq!(mine.last().unwrap().t, 1.0);
        assert_eq!(mine.last().unwrap().x, out.points()[i]);
    }
}

#[test]
fn signed_mixture_stays_positive_along_paths() {
    let spec = MixtureSpec::new_signed(
        crate::distributions::ReferenceDensity::StandardNormal { dim: 1 },
        vec![0.65, -0.3, 0.65],
        vec![vec![-1.0], vec![0.0], vec![1.0]],
        vec![Matrix::identity(1); 3],
    )
    .unwrap();
    let cfg = TransportConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let x0: f64 = rng.sample(rand_distr::StandardNormal);
        let mut ok = true;
        flow_observed(&spec, &cfg, &[x0], 1.0, &mut |t, x| {
            ok &= intermediate_log_density(&spec, t, x).is_ok_and(f64::is_finite);
        })
        .unwrap();
        assert!(ok);
    }
}

#[test]
fn componentwise_split_examples() {
    assert_eq!(
        diophantine_split(&[0.3, 0.4, 0.3], 10).unwrap(),
        vec![3, 4, 3]
    );
    assert!(matches!(
        diophantine_split(&[0.1, 0.9], 4),
        Err(Error::InsufficientBudget { component: 0 })
    ));
    assert!(diophantine_split(&[1.3, -0.3], 10).is_err());
}

#[test]
fn componentwise_weights_and_blocks() {
    let spec = three_gaussians();
    let pts = mc_points(2, 10, &mut ChaCha8Rng::seed_from_u64(2));
    let out = componentwise_transport(&spec, &pts).unwrap();
    assert_eq!(out.len(), 10);
    assert!(out.weights().iter().all(|w| (w - 0.1).abs() < 1e-15));
    let first = affine_image(&spec, 0, &pts.points()[..3]);
    assert_eq!(&out.points()[..3], &first[..]);
    let last = affine_image(&spec, 2, &pts.points()[7..]);
    assert_eq!(&out.points()[7..], &last[..]);
}

#[test]
fn componentwise_single_component_is_affine() {
    let m = Matrix::from_rows(&[vec![1.5, 0.0], vec![0.4, 0.7]]).unwrap();
    let spec = single(vec![0.3, -2.0], m);
    let pts = mc_points(2, 16, &mut ChaCha8Rng::seed_from_u64(3));
    let c = componentwise_transport(&spec, &pts).unwrap();
    let t = transport_set(&spec, &TransportConfig::default(), &pts).unwrap();
    for (a, b) in c.points().iter().zip(t.points()) {
        assert!(close(a, b, 1e-8));
    }
    assert!(c.weights().iter().all(|&w| w == 1.0 / 16.0));
}

#[test]
fn componentwise_needs_uniform_weights() {
    let spec = three_gaussians();
    let grid =
        crate::pointsets::smolyak_grid(crate::pointsets::SparseGridLevel::gauss_hermite(5, 2))
            .unwrap();
    assert!(componentwise_transport(&spec, &grid).is_err());
}
