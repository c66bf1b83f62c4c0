//! Droop-controlled grid-forming inverter with an LC filter and cascaded
//! voltage/current loops.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{c, check_bounded, put, two_pi, Drive, DriveSchedule, Network, PlantError, PlantScenario, Rk4, Terminal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GfmParams {
    /// Nominal frequency, Hz; also the pu base.
    pub f0: f64,
    /// Voltage setpoint, pu.
    pub u0: f64,
    /// P-f droop, Hz/pu.
    pub m_p: f64,
    /// Q-V droop, pu/pu.
    pub n_q: f64,
    /// Power measurement low-pass corner, Hz.
    pub power_filter_hz: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub r_f: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    /// Output current feedforward gain in the voltage loop.
    pub ff_current: f64,
    /// Virtual output impedance.
    pub r_v: f64,
    pub x_v: f64,
    pub network: Network,
}

impl Default for GfmParams {
    fn default() -> Self {
        GfmParams {
            f0: 50.0,
            u0: 1.0,
            m_p: 0.2,
            n_q: 0.05,
            power_filter_hz: 10.0,
            l_f: 0.08,
            c_f: 0.074,
            r_f: 0.005,
            k_pv: 0.2,
            k_iv: 2.0,
            k_pc: 0.64,
            k_ic: 12.57,
            ff_current: 1.0,
            r_v: 0.02,
            x_v: 0.1,
            network: Network::default(),
        }
    }
}

impl GfmParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("f0", self.f0),
            ("u0", self.u0),
            ("power_filter_hz", self.power_filter_hz),
            ("l_f", self.l_f),
            ("c_f", self.c_f),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("m_p", self.m_p),
            ("n_q", self.n_q),
            ("r_f", self.r_f),
            ("k_pv", self.k_pv),
            ("k_iv", self.k_iv),
            ("k_pc", self.k_pc),
            ("k_ic", self.k_ic),
            ("r_v", self.r_v),
            ("x_v", self.x_v),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PlantError::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        self.network.validate()
    }
}

// State layout.
const DELTA: usize = 0;
const PF: usize = 1;
const QF: usize = 2;
const PHI_S: usize = 3;
const XI_V: usize = 4;
const GAMMA_C: usize = 6;
const I_L: usize = 8;
const U_C: usize = 10;
const I_G: usize = 12;
const DIM: usize = 14;

fn rhs(p: &GfmParams, d: &Drive, x: &[f64], dx: &mut [f64]) -> Terminal {
    let wb = two_pi() * p.f0;
    let j = Complex64::i();
    let rot = Complex64::from_polar(1.0, -x[DELTA]);

    let i_l = c(x, I_L);
    let u_c = c(x, U_C);
    let i_g = if p.network.source { c(x, I_G) } else { Complex64::new(0.0, 0.0) };
    let i_o_net = Complex64::new(d.load_g, -d.load_b) * u_c + i_g;

    let u = u_c * rot;
    let il = i_l * rot;
    let io = i_o_net * rot;
    let s = u * io.conj();

    let f = p.f0 - p.m_p * x[PF];
    let w_pu = f / p.f0;
    let e = p.u0 - p.n_q * x[QF];
    let u_ref = Complex64::new(e, 0.0) - Complex64::new(p.r_v, p.x_v) * io;

    let e_v = u_ref - u;
    let il_ref = p.k_pv * e_v + p.k_iv * c(x, XI_V) + p.ff_current * io + j * w_pu * p.c_f * u;
    let e_c = il_ref - il;
    let v = p.k_pc * e_c + p.k_ic * c(x, GAMMA_C) + u + j * w_pu * p.l_f * il;
    let v_net = v * rot.conj();

    let wc = two_pi() * p.power_filter_hz;
    dx[DELTA] = two_pi() * (f - p.f0);
    dx[PF] = wc * (s.re - x[PF]);
    dx[QF] = wc * (s.im - x[QF]);
    put(dx, XI_V, e_v);
    put(dx, GAMMA_C, e_c);
    put(dx, I_L, wb / p.l_f * (v_net - u_c - p.r_f * i_l - j * p.l_f * i_l));
    put(dx, U_C, wb / p.c_f * (i_l - i_o_net - j * p.c_f * u_c));
    if p.network.source {
        let net = &p.network;
        let u_s = Complex64::from_polar(d.source_voltage, x[PHI_S]);
        dx[PHI_S] = two_pi() * (d.source_frequency - p.f0);
        put(dx, I_G, wb / net.l_line * (u_c - u_s - net.r_line * i_g - j * net.l_line * i_g));
    } else {
        dx[PHI_S] = 0.0;
        put(dx, I_G, Complex64::new(0.0, 0.0));
    }
    Terminal { i: io, u, f }
}

fn initial_state(p: &GfmParams, d: &Drive) -> Vec<f64> {
    let mut x = vec![0.0; DIM];
    let u = Complex64::new(p.u0, 0.0);
    put(&mut x, U_C, u);
    let i_l = Complex64::new(d.load_g, -d.load_b) * u + Complex64::new(0.0, p.c_f) * u;
    put(&mut x, I_L, i_l);
    put(&mut x, GAMMA_C, p.r_f * i_l / p.k_ic.max(1e-9));
    x
}

pub(super) fn run(p: &GfmParams, sc: &PlantScenario) -> Result<(Vec<Terminal>, f64), PlantError> {
    p.validate()?;
    let m = sc.substeps()?;
    let h = sc.solver_step;
    let schedule = DriveSchedule::new(&sc.excitation, &p.network, (0.0, 0.0));
    if sc.excitation.channel("i_d_ref").is_some() || sc.excitation.channel("i_q_ref").is_some() {
        return Err(PlantError::InvalidScenario(
            "current reference channels do not apply to a grid-forming device".into(),
        ));
    }
    if !p.network.source && (sc.excitation.channel("u_ref").is_some() || sc.excitation.channel("f_ref").is_some()) {
        return Err(PlantError::InvalidScenario(
            "source channels given but the network has no source".into(),
        ));
    }

    let skip = [DELTA, PHI_S];
    let mut x = initial_state(p, &schedule.at(0));
    let mut rk = Rk4::new(DIM);
    let mut scratch = vec![0.0; DIM];

    let pre_steps = (sc.preroll / h).round() as usize;
    let d0 = schedule.at(0);
    for k in 0..pre_steps {
        rk.step(&mut x, 0.0, h, &mut |_, x: &[f64], dx: &mut [f64]| {
            rhs(p, &d0, x, dx);
        });
        if k % m == m - 1 {
            check_bounded(&x, (k + 1) as f64 * h - sc.preroll, &skip)?;
        }
    }
    check_bounded(&x, 0.0, &skip)?;

    let n = sc.excitation.len();
    let dt = sc.excitation.sample_time();
    let theta0 = x[DELTA];
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let d = schedule.at(k);
        out.push(rhs(p, &d, &x, &mut scratch));
        if k + 1 == n {
            break;
        }
        for _ in 0..m {
            rk.step(&mut x, 0.0, h, &mut |_, x: &[f64], dx: &mut [f64]| {
                rhs(p, &d, x, dx);
            });
        }
        check_bounded(&x, (k + 1) as f64 * dt, &skip)?;
    }
    Ok((out, theta0))
}
