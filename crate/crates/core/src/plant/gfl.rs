//! Grid-following inverter: L filter, SRF-PLL and a dq current loop, tied
//! to a voltage source through a series line.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{c, check_bounded, put, two_pi, Drive, DriveSchedule, Network, PlantError, PlantScenario, Rk4, Terminal};

/// |u_q| must be below this many pu two seconds into the run.
pub const LOCK_TOLERANCE: f64 = 0.05;
const LOCK_TIME: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GflParams {
    pub f0: f64,
    pub l_f: f64,
    pub r_f: f64,
    /// PLL PI gains, rad/s per pu and rad/s² per pu.
    pub pll_kp: f64,
    pub pll_ki: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    /// Current reference prefilter time constant, s.
    pub ref_tau: f64,
    /// Voltage feedforward low-pass corner, Hz.
    pub ff_filter_hz: f64,
    /// Current references used when no `i_d_ref`/`i_q_ref` channel is given.
    pub i_d_ref: f64,
    pub i_q_ref: f64,
    pub network: Network,
}

impl Default for GflParams {
    fn default() -> Self {
        GflParams {
            f0: 50.0,
            l_f: 0.1,
            r_f: 0.01,
            pll_kp: 88.8,
            pll_ki: 3948.0,
            k_pc: 0.6,
            k_ic: 12.0,
            ref_tau: 0.05,
            ff_filter_hz: 200.0,
            i_d_ref: 0.5,
            i_q_ref: 0.0,
            network: Network {
                r_line: 0.02,
                l_line: 0.2,
                ..Network::default()
            },
        }
    }
}

impl GflParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("f0", self.f0),
            ("l_f", self.l_f),
            ("ref_tau", self.ref_tau),
            ("ff_filter_hz", self.ff_filter_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("r_f", self.r_f),
            ("pll_kp", self.pll_kp),
            ("pll_ki", self.pll_ki),
            ("k_pc", self.k_pc),
            ("k_ic", self.k_ic),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PlantError::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.network.source {
            return Err(PlantError::InvalidParams(
                "a grid-following device needs a network voltage source".into(),
            ));
        }
        if self.network.load_g != 0.0 || self.network.load_b != 0.0 {
            return Err(PlantError::InvalidParams(
                "shunt load at the PCC is not supported for a grid-following device".into(),
            ));
        }
        self.network.validate()
    }
}

const DELTA: usize = 0;
const XI_PLL: usize = 1;
const PHI_G: usize = 2;
const I: usize = 3;
const GAMMA_C: usize = 5;
const I_REF_F: usize = 7;
const U_FF: usize = 9;
const DIM: usize = 11;

fn rhs(p: &GflParams, d: &Drive, x: &[f64], dx: &mut [f64]) -> Terminal {
    let wb = two_pi() * p.f0;
    let j = Complex64::i();
    let net = &p.network;
    let rot = Complex64::from_polar(1.0, -x[DELTA]);

    let i = c(x, I);
    let i_dq = i * rot;
    let e_c = c(x, I_REF_F) - i_dq;
    let v = p.k_pc * e_c + p.k_ic * c(x, GAMMA_C) + c(x, U_FF) + j * p.l_f * i_dq;
    let v_net = v * rot.conj();

    let u_s = Complex64::from_polar(d.source_voltage, x[PHI_G]);
    let l_t = p.l_f + net.l_line;
    // Inductor voltage per unit of total inductance; the PCC sits on the
    // divider between filter and line.
    let drive = (v_net - u_s - (p.r_f + net.r_line) * i - j * l_t * i) / l_t;
    let u = u_s + net.r_line * i + j * net.l_line * i + net.l_line * drive;
    let u_p = u * rot;

    let w = two_pi() * p.f0 + p.pll_kp * u_p.im + x[XI_PLL];
    let i_ref = Complex64::new(d.i_d_ref, d.i_q_ref);

    dx[DELTA] = w - two_pi() * p.f0;
    dx[XI_PLL] = p.pll_ki * u_p.im;
    dx[PHI_G] = two_pi() * (d.source_frequency - p.f0);
    put(dx, I, wb * drive);
    put(dx, GAMMA_C, e_c);
    put(dx, I_REF_F, (i_ref - c(x, I_REF_F)) / p.ref_tau);
    put(dx, U_FF, two_pi() * p.ff_filter_hz * (u_p - c(x, U_FF)));
    Terminal {
        i: i_dq,
        u: u_p,
        f: w / two_pi(),
    }
}

fn initial_state(p: &GflParams, d: &Drive) -> Vec<f64> {
    let mut x = vec![0.0; DIM];
    let i = Complex64::new(d.i_d_ref, d.i_q_ref);
    let u = Complex64::new(d.source_voltage, 0.0) + Complex64::new(p.network.r_line, p.network.l_line) * i;
    put(&mut x, I, i);
    put(&mut x, I_REF_F, i);
    put(&mut x, U_FF, u);
    put(&mut x, GAMMA_C, p.r_f * i / p.k_ic.max(1e-9));
    x
}

pub(super) fn run(p: &GflParams, sc: &PlantScenario) -> Result<(Vec<Terminal>, f64), PlantError> {
    p.validate()?;
    let m = sc.substeps()?;
    let h = sc.solver_step;
    if sc.excitation.channel("p_load").is_some() || sc.excitation.channel("q_load").is_some() {
        return Err(PlantError::InvalidScenario(
            "load channels are not supported for a grid-following device".into(),
        ));
    }
    let schedule = DriveSchedule::new(&sc.excitation, &p.network, (p.i_d_ref, p.i_q_ref));
    let skip = [DELTA, PHI_G, XI_PLL];
    let mut x = initial_state(p, &schedule.at(0));
    let mut rk = Rk4::new(DIM);
    let mut scratch = vec![0.0; DIM];
    let mut elapsed = 0.0;
    let mut lock_checked = false;
    let mut lock = |x: &[f64], d: &Drive, elapsed: f64, scratch: &mut [f64]| -> Result<(), PlantError> {
        if !lock_checked && elapsed >= LOCK_TIME - 1e-9 {
            lock_checked = true;
            let t = rhs(p, d, x, scratch);
            if t.u.im.abs() > LOCK_TOLERANCE {
                return Err(PlantError::LockLoss {
                    time: elapsed - sc.preroll,
                    u_q: t.u.im,
                });
            }
        }
        Ok(())
    };

    let d0 = schedule.at(0);
    let pre_steps = (sc.preroll / h).round() as usize;
    for k in 0..pre_steps {
        rk.step(&mut x, 0.0, h, &mut |_, x: &[f64], dx: &mut [f64]| {
            rhs(p, &d0, x, dx);
        });
        elapsed = (k + 1) as f64 * h;
        if k % m == m - 1 {
            check_bounded(&x, elapsed - sc.preroll, &skip)?;
            lock(&x, &d0, elapsed, &mut scratch)?;
        }
    }
    check_bounded(&x, 0.0, &skip)?;

    let n = sc.excitation.len();
    let dt = sc.excitation.sample_time();
    let theta0 = x[DELTA];
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let d = schedule.at(k);
        lock(&x, &d, elapsed, &mut scratch)?;
        out.push(rhs(p, &d, &x, &mut scratch));
        if k + 1 == n {
            break;
        }
        for _ in 0..m {
            rk.step(&mut x, 0.0, h, &mut |_, x: &[f64], dx: &mut [f64]| {
                rhs(p, &d, x, dx);
            });
        }
        elapsed += dt;
        check_bounded(&x, (k + 1) as f64 * dt, &skip)?;
    }
    Ok((out, theta0))
}

#[cfg(test)]
mod tests {
    use super::super::{simulate, PlantParams, PlantScenario};
    use super::*;
    use crate::timeseries::TimeSeries;

    fn run_refs(id: Vec<f64>, iq: Vec<f64>) -> Result<TimeSeries, PlantError> {
        let ex = TimeSeries::new(1e-3, vec![("i_d_ref", id), ("i_q_ref", iq)]).unwrap();
        simulate(&PlantScenario::new(PlantParams::Gfl(GflParams::default()), ex))
    }

    #[test]
    fn tracks_current_references() {
        // holds are 20 prefilter time constants
        let n = 2000;
        let id: Vec<f64> = (0..n).map(|k| if k < 1000 { 0.5 } else { 0.8 }).collect();
        let ts = run_refs(id, vec![0.1; n]).unwrap();
        let i_d = ts.channel("i_d").unwrap();
        let i_q = ts.channel("i_q").unwrap();
        assert!((i_d[999] - 0.5).abs() < 1e-4, "i_d = {}", i_d[999]);
        assert!((i_d[n - 1] - 0.8).abs() < 1e-4, "i_d = {}", i_d[n - 1]);
        assert!((i_q[n - 1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn pll_locks_to_grid() {
        let ts = run_refs(vec![0.5; 200], vec![0.0; 200]).unwrap();
        let u_q = ts.channel("u_q").unwrap();
        let f = ts.channel("f").unwrap();
        assert!(u_q[199].abs() < 1e-4);
        assert!((f[199] - 50.0).abs() < 1e-4);
        let u_d = ts.channel("u_d").unwrap()[199];
        assert!(u_d > 1.0 && u_d < 1.2);
    }

    #[test]
    fn follows_grid_frequency_step() {
        let f_ref: Vec<f64> = (0..1500).map(|k| if k < 500 { 50.0 } else { 50.5 }).collect();
        let ex = TimeSeries::new(1e-3, vec![("f_ref", f_ref)]).unwrap();
        let ts = simulate(&PlantScenario::new(PlantParams::Gfl(GflParams::default()), ex)).unwrap();
        let f = ts.channel("f").unwrap();
        assert!((f[499] - 50.0).abs() < 1e-4);
        assert!((f[1499] - 50.5).abs() < 1e-3, "f = {}", f[1499]);
    }

    #[test]
    fn zero_injection_sees_grid_voltage() {
        let ts = run_refs(vec![0.0; 300], vec![0.0; 300]).unwrap();
        let at = |ch: &str| ts.channel(ch).unwrap()[299];
        assert!(at("i_d").abs() < 1e-6 && at("i_q").abs() < 1e-6);
        assert!((at("u_d") - 1.0).abs() < 1e-6);
        assert!(at("u_q").abs() < 1e-6);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(8))]
        #[test]
        fn tracks_any_reference(id in -1.0f64..1.0, iq in -1.0f64..1.0) {
            let ts = run_refs(vec![id; 400], vec![iq; 400]).unwrap();
            proptest::prop_assert!((ts.channel("i_d").unwrap()[399] - id).abs() < 1e-3);
            proptest::prop_assert!((ts.channel("i_q").unwrap()[399] - iq).abs() < 1e-3);
        }
    }

    #[test]
    fn sluggish_pll_reports_lock_loss() {
        let p = GflParams {
            pll_kp: 0.05,
            pll_ki: 0.01,
            network: Network {
                source_frequency: 50.5,
                ..GflParams::default().network
            },
            ..Default::default()
        };
        let ex = TimeSeries::new(1e-3, vec![("i_d_ref", vec![0.5; 100])]).unwrap();
        let err = simulate(&PlantScenario::new(PlantParams::Gfl(p), ex)).unwrap_err();
        assert!(matches!(err, PlantError::LockLoss { .. }), "{err:?}");
    }

    #[test]
    fn rejects_islanded_network() {
        let p = GflParams {
            network: Network::islanded(0.0, 0.0),
            ..Default::default()
        };
        let ex = TimeSeries::new(1e-3, vec![("i_d_ref", vec![0.5; 10])]).unwrap();
        let sc = PlantScenario::new(PlantParams::Gfl(p), ex);
        assert!(matches!(simulate(&sc), Err(PlantError::InvalidParams(_))));
    }
}
