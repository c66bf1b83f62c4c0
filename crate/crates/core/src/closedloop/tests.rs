use approx::assert_abs_diff_eq;

use super::*;
use crate::hwmodel::{HwMiso, LinearBlock, Nonlinearity, ScaledNonlinearity};
use crate::plant::{GflParams, GfmParams};
use crate::timeseries::dq_to_abc;

const INS: [&str; 2] = ["i_d", "i_q"];

fn block(output: &str, gains: [f64; 2], tail: Vec<f64>, offset: f64) -> HwMiso {
    HwMiso {
        output_nonlinearity: ScaledNonlinearity::identity_scale(Nonlinearity::Polynomial {
            coefficients: vec![offset, 1.0],
        }),
        ..HwMiso::linear_only(&INS, output, LinearBlock::new(vec![vec![gains[0]], vec![gains[1]]], tail, 0))
    }
}

/// Constant voltage `(d, q)` at frequency `f`, independent of current.
fn source(d: f64, q: f64, f: f64) -> HwMimo {
    HwMimo::new(vec![
        block("u_d", [0.0, 0.0], vec![], d),
        block("u_q", [0.0, 0.0], vec![], q),
        block("f", [0.0, 0.0], vec![], f),
    ])
    .unwrap()
}

fn passthrough(f: f64) -> HwMimo {
    HwMimo::new(vec![
        block("u_d", [1.0, 0.0], vec![], 0.0),
        block("u_q", [0.0, 1.0], vec![], 0.0),
        block("f", [0.0, 0.0], vec![], f),
    ])
    .unwrap()
}

#[test]
fn angle_advances_one_turn_per_period() {
    let m = source(1.0, 0.0, 50.0);
    let mut a = AdaptedModel::new(&m, 0.0, 50.0).unwrap();
    for _ in 0..20 {
        a.step([0.0; 3], 1e-3);
    }
    assert_abs_diff_eq!(a.theta(), 2.0 * PI, epsilon = 1e-12);
}

#[test]
fn constant_dq_gives_balanced_sinusoids_at_model_frequency() {
    let m = source(0.9, 0.2, 51.0);
    let dt = 1e-4;
    let mut a = AdaptedModel::new(&m, 0.0, 50.0).unwrap();
    // first step uses the supplied 50 Hz, then the model's own 51 Hz
    let mut theta = 2.0 * PI * 50.0 * dt;
    for _ in 0..500 {
        let o = a.step([0.0; 3], dt);
        assert_abs_diff_eq!(o.theta, theta, epsilon = 1e-9);
        let mag = 0.9f64.hypot(0.2);
        let phi = 0.2f64.atan2(0.9);
        assert_abs_diff_eq!(o.u_abc[0], mag * (theta + phi).cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(o.u_abc[1], mag * (theta + phi - 2.0 * PI / 3.0).cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(o.u_abc.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
        assert_eq!(o.f, 51.0);
        theta += 2.0 * PI * 51.0 * dt;
    }
}

#[test]
fn external_angle_and_passthrough() {
    let m = passthrough(50.0);
    let mut a = AdaptedModel::new(&m, 0.0, 50.0).unwrap();
    let (x, y, z) = inverse_park(0.4, -0.1, 1.3);
    let o = a.step_with_angle([x, y, z], 1.3);
    assert_abs_diff_eq!(o.i_d, 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(o.i_q, -0.1, epsilon = 1e-12);
    for (u, i) in o.u_abc.iter().zip([x, y, z]) {
        assert_abs_diff_eq!(*u, i, epsilon = 1e-12);
    }
}

#[test]
fn model_without_current_inputs_is_rejected() {
    let m = HwMimo::new(vec![HwMiso::linear_only(&["p"], "u_d", LinearBlock::new(vec![vec![1.0]], vec![], 0))]).unwrap();
    assert!(matches!(AdaptedModel::new(&m, 0.0, 50.0), Err(ClosedLoopError::MissingChannel(_))));
}

#[test]
fn replay_recovers_dq_currents() {
    let n = 400;
    let dt = 1e-3;
    let theta: Vec<f64> = (0..n).map(|k| 0.3 + 2.0 * PI * 50.0 * dt * k as f64).collect();
    let id: Vec<f64> = (0..n).map(|k| 0.5 + 0.1 * (k as f64 * 0.05).sin()).collect();
    let iq = vec![-0.2; n];
    let [ia, ib, ic] = dq_to_abc(&id, &iq, &theta).unwrap();
    let [ua, ub, uc] = dq_to_abc(&vec![1.0; n], &vec![0.0; n], &theta).unwrap();
    let data = TimeSeries::new(
        dt,
        vec![
            ("i_a", ia),
            ("i_b", ib),
            ("i_c", ic),
            ("u_a", ua),
            ("u_b", ub),
            ("u_c", uc),
            ("u_d", vec![1.0; n]),
            ("u_q", vec![0.0; n]),
            ("f", vec![50.0; n]),
        ],
    )
    .unwrap();
    let out = replay(&source(1.0, 0.0, 50.0), &data).unwrap();
    for (a, b) in out.channel("i_d").unwrap().iter().zip(&id) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
    for v in out.channel("i_q").unwrap() {
        assert_abs_diff_eq!(*v, -0.2, epsilon = 1e-9);
    }
}

fn scene(levels: &[f64]) -> MicrogridScene {
    let schedule = voltage_staircase(levels, 0.2, 1e-3).unwrap();
    let mut s = MicrogridScene::new(PlantParams::Gfm(GfmParams::default()), schedule);
    s.preroll = 0.5;
    s
}

#[test]
fn staircase_layout() {
    let s = voltage_staircase(&[1.0, 1.05, 0.95], 0.1, 1e-3).unwrap();
    let u = s.channel("u_ref").unwrap();
    assert_eq!(u.len(), 300);
    assert_eq!((u[99], u[100], u[299]), (1.0, 1.05, 0.95));
}

#[test]
fn identical_devices_do_not_deviate() {
    let s = scene(&[1.0, 1.05, 0.95]);
    let c = run_comparison(&s, &s, Device::BlackBox).unwrap();
    assert!(c.summary.stable);
    for d in &c.summary.deviations {
        assert_eq!(d.max_abs, 0.0, "{}", d.channel);
        assert_eq!(d.rms, 0.0);
    }
    assert_eq!(c.series.names().len(), 6);
    assert_eq!(c.series.len(), 600);
}

#[test]
fn horizons_must_match() {
    let a = scene(&[1.0, 1.05]);
    let b = scene(&[1.0, 1.05, 0.95]);
    assert!(matches!(run_comparison(&a, &b, Device::BlackBox), Err(ClosedLoopError::InvalidScene(_))));
}

#[test]
fn grid_following_device_is_rejected() {
    let s = MicrogridScene::new(PlantParams::Gfl(GflParams::default()), voltage_staircase(&[1.0], 0.1, 1e-3).unwrap());
    assert!(matches!(run_scene(&s, Device::BlackBox), Err(ClosedLoopError::InvalidScene(_))));
}

#[test]
fn stiff_source_surrogate_tracks_voltage() {
    // a 1 pu source at 50 Hz against a 1 pu grid: no current flows
    let s = scene(&[1.0, 1.0]);
    let m = source(1.0, 0.0, 50.0);
    let out = run_scene(&s, Device::Surrogate(&m)).unwrap();
    for ch in ["i_d", "i_q"] {
        assert!(out.channel(ch).unwrap().iter().all(|v| v.abs() < 1e-9), "{ch}");
    }
    // a 5 % lower grid draws reactive-dominated current through the line
    let s = scene(&[0.95, 0.95]);
    let out = run_scene(&s, Device::Surrogate(&m)).unwrap();
    let net = GfmParams::default().network;
    let z = Complex64::new(net.r_line, net.l_line);
    let expected = Complex64::new(0.05, 0.0) / z;
    assert_abs_diff_eq!(*out.channel("i_d").unwrap().last().unwrap(), expected.re, epsilon = 1e-6);
    assert_abs_diff_eq!(*out.channel("i_q").unwrap().last().unwrap(), expected.im, epsilon = 1e-6);
}

#[test]
fn divergence_names_the_slot() {
    let unstable = HwMimo::new(vec![
        block("u_d", [1.0, 0.0], vec![-1.5], 0.0),
        block("u_q", [0.0, 0.0], vec![], 0.0),
        block("f", [0.0, 0.0], vec![], 50.0),
    ])
    .unwrap();
    let s = scene(&[0.95, 1.0]);
    match run_comparison(&s, &s, Device::Surrogate(&unstable)) {
        Err(ClosedLoopError::Run { slot: Slot::Surrogate, source }) => {
            assert!(matches!(*source, ClosedLoopError::Divergence { .. }))
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_current_free_run_is_bounded() {
    let out = zero_current_run(&source(1.0, 0.0, 50.0), 60_000, 1e-3, 50.0).unwrap();
    assert_eq!(out.len(), 60_000);
    assert!(out.channel("u_d").unwrap().iter().all(|v| *v == 1.0));
}
