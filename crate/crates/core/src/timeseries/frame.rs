//! abc ↔ dq transforms and angle reconstruction.
//!
//! Amplitude-invariant Park transform with the d axis aligned to the phase-a
//! cosine: a balanced set `a = cos(θ + φ)` maps to `d + jq = e^{jφ}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SeriesError;

const TWO_THIRDS_PI: f64 = 2.0 * PI / 3.0;

/// The only supported frame convention. Kept as a type so artifacts record it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameConvention {
    #[default]
    AmplitudeInvariantCosine,
}

/// Rotating-frame angle from a frequency record, backward rectangular rule.
/// The result is not wrapped.
pub fn angle_from_frequency(f: &[f64], sample_time: f64, theta0: f64) -> Result<Vec<f64>, SeriesError> {
    if !(sample_time.is_finite() && sample_time > 0.0) {
        return Err(SeriesError::InvalidSampleTime(sample_time));
    }
    if let Some(index) = f.iter().position(|v| !v.is_finite()) {
        return Err(SeriesError::NonFinite {
            channel: "f".into(),
            index,
        });
    }
    let mut theta = Vec::with_capacity(f.len());
    let mut acc = theta0;
    for (k, fk) in f.iter().enumerate() {
        if k > 0 {
            acc += 2.0 * PI * fk * sample_time;
        }
        theta.push(acc);
    }
    Ok(theta)
}

#[inline]
pub fn park(a: f64, b: f64, c: f64, theta: f64) -> (f64, f64) {
    let (s0, c0) = theta.sin_cos();
    let (s1, c1) = (theta - TWO_THIRDS_PI).sin_cos();
    let (s2, c2) = (theta + TWO_THIRDS_PI).sin_cos();
    let d = (2.0 / 3.0) * (a * c0 + b * c1 + c * c2);
    let q = -(2.0 / 3.0) * (a * s0 + b * s1 + c * s2);
    (d, q)
}

#[inline]
pub fn inverse_park(d: f64, q: f64, theta: f64) -> (f64, f64, f64) {
    let phase = |t: f64| {
        let (s, c) = t.sin_cos();
        d * c - q * s
    };
    (
        phase(theta),
        phase(theta - TWO_THIRDS_PI),
        phase(theta + TWO_THIRDS_PI),
    )
}

fn check_lengths(expected: usize, named: &[(&str, usize)]) -> Result<(), SeriesError> {
    for (name, len) in named {
        if *len != expected {
            return Err(SeriesError::LengthMismatch {
                channel: name.to_string(),
                expected,
                found: *len,
            });
        }
    }
    Ok(())
}

pub fn abc_to_dq(abc: [&[f64]; 3], theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SeriesError> {
    let n = theta.len();
    check_lengths(n, &[("a", abc[0].len()), ("b", abc[1].len()), ("c", abc[2].len())])?;
    let (d, q) = (0..n)
        .map(|k| park(abc[0][k], abc[1][k], abc[2][k], theta[k]))
        .unzip();
    Ok((d, q))
}

pub fn dq_to_abc(d: &[f64], q: &[f64], theta: &[f64]) -> Result<[Vec<f64>; 3], SeriesError> {
    let n = theta.len();
    check_lengths(n, &[("d", d.len()), ("q", q.len())])?;
    let mut out = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for k in 0..n {
        let (a, b, c) = inverse_park(d[k], q[k], theta[k]);
        out[0].push(a);
        out[1].push(b);
        out[2].push(c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn balanced(theta: &[f64], amp: f64, phi: f64) -> [Vec<f64>; 3] {
        let ph = |shift: f64| theta.iter().map(|t| amp * (t + phi + shift).cos()).collect();
        [ph(0.0), ph(-TWO_THIRDS_PI), ph(TWO_THIRDS_PI)]
    }

    #[test]
    fn angle_one_cycle_at_fifty_hertz() {
        let theta = angle_from_frequency(&[50.0; 21], 1e-3, 0.0).unwrap();
        assert_abs_diff_eq!(theta[20], 2.0 * PI, epsilon = 1e-12);
        assert_eq!(theta[0], 0.0);
    }

    #[test]
    fn angle_zero_frequency_is_constant() {
        let theta = angle_from_frequency(&[0.0; 50], 2e-3, 0.7).unwrap();
        assert!(theta.iter().all(|t| *t == 0.7));
    }

    #[test]
    fn angle_off_nominal() {
        let theta = angle_from_frequency(&vec![49.5; 1001], 1e-3, 0.0).unwrap();
        assert_abs_diff_eq!(theta[1000], 2.0 * PI * 49.5, epsilon = 1e-9);
        assert_abs_diff_eq!(theta[1000], 311.017_672_705_389_5, epsilon = 1e-6);
    }

    #[test]
    fn angle_rejects_nan() {
        assert!(angle_from_frequency(&[50.0, f64::NAN], 1e-3, 0.0).is_err());
    }

    #[test]
    fn aligned_set_maps_to_unit_d() {
        let theta: Vec<f64> = (0..200).map(|k| 0.031 * k as f64).collect();
        let abc = balanced(&theta, 1.0, 0.0);
        let (d, q) = abc_to_dq([&abc[0], &abc[1], &abc[2]], &theta).unwrap();
        for k in 0..theta.len() {
            assert_abs_diff_eq!(d[k], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(q[k], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lagging_set_maps_to_negative_q() {
        let theta: Vec<f64> = (0..200).map(|k| 0.05 * k as f64 - 1.0).collect();
        let abc = balanced(&theta, 1.0, -PI / 2.0);
        let (d, q) = abc_to_dq([&abc[0], &abc[1], &abc[2]], &theta).unwrap();
        for k in 0..theta.len() {
            assert_abs_diff_eq!(d[k], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(q[k], -1.0, epsilon = 1e-12);
        }
        let back = dq_to_abc(&d, &q, &theta).unwrap();
        for p in 0..3 {
            for k in 0..theta.len() {
                assert_abs_diff_eq!(back[p][k], abc[p][k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_and_inverse_of_alignment() {
        let theta = vec![0.3; 5];
        let z = vec![0.0; 5];
        let (d, q) = abc_to_dq([&z, &z, &z], &theta).unwrap();
        assert!(d.iter().chain(&q).all(|v| *v == 0.0));
        let abc = dq_to_abc(&[1.0; 5], &[0.0; 5], &theta).unwrap();
        let expected = balanced(&theta, 1.0, 0.0);
        for p in 0..3 {
            for k in 0..5 {
                assert_abs_diff_eq!(abc[p][k], expected[p][k], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(abc_to_dq([&[1.0], &[1.0, 2.0], &[1.0]], &[0.0]).is_err());
        assert!(dq_to_abc(&[1.0], &[1.0, 2.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(amp in 0.01f64..10.0, phi in -PI..PI, w in 1.0f64..800.0, th0 in -10.0f64..10.0) {
            let theta: Vec<f64> = (0..64).map(|k| th0 + w * 1e-3 * k as f64).collect();
            let abc = balanced(&theta, amp, phi);
            let (d, q) = abc_to_dq([&abc[0], &abc[1], &abc[2]], &theta).unwrap();
            let back = dq_to_abc(&d, &q, &theta).unwrap();
            for p in 0..3 {
                for k in 0..theta.len() {
                    prop_assert!((back[p][k] - abc[p][k]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn angle_is_linear_in_frequency(alpha in -3.0f64..3.0, th0 in -5.0f64..5.0, seed in 0u64..1000) {
            let f: Vec<f64> = (0..100).map(|k| 50.0 + ((k as u64 * 7919 + seed) % 13) as f64 * 0.1).collect();
            let scaled: Vec<f64> = f.iter().map(|v| alpha * v).collect();
            let a = angle_from_frequency(&f, 1e-3, th0).unwrap();
            let b = angle_from_frequency(&scaled, 1e-3, th0).unwrap();
            for k in 0..f.len() {
                prop_assert!(((b[k] - th0) - alpha * (a[k] - th0)).abs() <= 1e-9);
            }
        }
    }
}
