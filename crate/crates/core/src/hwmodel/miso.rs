use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::{equilibrium, fir_accumulate, iir_in_place, InitialState, LinearBlock};
use super::nonlinearity::ScaledNonlinearity;
use super::ModelError;
use crate::timeseries::TimeSeries;

/// Magnitude beyond which a simulated intermediate signal counts as diverged.
const BLOWUP: f64 = 1e10;

/// One Hammerstein-Wiener block: per-input static maps, a shared linear
/// block, and an output static map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwMiso {
    pub inputs: Vec<String>,
    pub output: String,
    pub input_nonlinearities: Vec<ScaledNonlinearity>,
    pub linear: LinearBlock,
    pub output_nonlinearity: ScaledNonlinearity,
    #[serde(default)]
    pub initial_state: InitialState,
}

impl HwMiso {
    /// Identity maps around a given linear block.
    pub fn linear_only(inputs: &[&str], output: &str, linear: LinearBlock) -> Self {
        HwMiso {
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.to_string(),
            input_nonlinearities: vec![ScaledNonlinearity::identity(); inputs.len()],
            linear,
            output_nonlinearity: ScaledNonlinearity::identity(),
            initial_state: InitialState::Zero,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.inputs.is_empty() || self.inputs.len() != self.input_nonlinearities.len() {
            return Err(ModelError::InvalidStructure(
                "need one input nonlinearity per input channel".into(),
            ));
        }
        for nl in &self.input_nonlinearities {
            nl.validate()?;
        }
        self.output_nonlinearity.validate()?;
        self.linear.validate(self.inputs.len())
    }

    /// Sizes of the θ sections: per-input α lengths, linear length, β length.
    fn layout(&self) -> (Vec<usize>, usize, usize) {
        (
            self.input_nonlinearities.iter().map(|n| n.n_params()).collect(),
            self.linear.n_params(),
            self.output_nonlinearity.n_params(),
        )
    }

    pub fn n_params(&self) -> usize {
        let (a, l, b) = self.layout();
        a.iter().sum::<usize>() + l + b
    }

    /// θ = [α_1 | … | α_m | b_1 | … | b_m | f_1..f_nf | β].
    pub fn theta(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.n_params());
        for nl in &self.input_nonlinearities {
            t.extend(nl.nl.params());
        }
        for b in &self.linear.numerators {
            t.extend(b);
        }
        t.extend(self.linear.tail());
        t.extend(self.output_nonlinearity.nl.params());
        t
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<(), ModelError> {
        let n = self.n_params();
        if theta.len() != n {
            return Err(ModelError::ParameterCount {
                expected: n,
                found: theta.len(),
            });
        }
        let mut at = 0;
        for nl in &mut self.input_nonlinearities {
            let k = nl.n_params();
            nl.nl.set_params(&theta[at..at + k]);
            at += k;
        }
        for b in &mut self.linear.numerators {
            let k = b.len();
            b.copy_from_slice(&theta[at..at + k]);
            at += k;
        }
        let nf = self.linear.nf();
        self.linear.denominator[1..].copy_from_slice(&theta[at..at + nf]);
        at += nf;
        self.output_nonlinearity.nl.set_params(&theta[at..]);
        self.validate()
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self, ModelError> {
        let mut m = self.clone();
        m.set_theta(theta)?;
        Ok(m)
    }

    pub fn input_slices<'a>(&self, data: &'a TimeSeries) -> Result<Vec<&'a [f64]>, ModelError> {
        self.inputs
            .iter()
            .map(|name| {
                data.channel(name)
                    .ok_or_else(|| ModelError::MissingChannel(name.clone()))
            })
            .collect()
    }

    pub fn simulate(&self, data: &TimeSeries) -> Result<Vec<f64>, ModelError> {
        self.simulate_inputs(&self.input_slices(data)?)
    }

    fn steady(&self) -> bool {
        self.initial_state == InitialState::SteadyState
    }

    /// Linear-block output x and the static-mapped inputs w.
    fn linear_response(&self, inputs: &[&[f64]]) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64), ModelError> {
        if inputs.len() != self.inputs.len() {
            return Err(ModelError::InvalidStructure(format!(
                "expected {} input channels, got {}",
                self.inputs.len(),
                inputs.len()
            )));
        }
        let n = inputs[0].len();
        if inputs.iter().any(|u| u.len() != n) {
            return Err(ModelError::InvalidStructure("input channels differ in length".into()));
        }
        let w: Vec<Vec<f64>> = inputs
            .iter()
            .zip(&self.input_nonlinearities)
            .map(|(u, nl)| u.iter().map(|x| nl.eval(*x)).collect())
            .collect();
        let steady = self.steady() && n > 0;
        let f1 = self.linear.den_at_one();
        let mut x = vec![0.0; n];
        let mut v_pre = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let pre = if steady { wi[0] } else { 0.0 };
            v_pre += self.linear.num_at_one(i) * pre;
            fir_accumulate(&self.linear.numerators[i], self.linear.delay, wi, pre, &mut x);
        }
        let x_pre = if steady { equilibrium(f1, v_pre) } else { 0.0 };
        iir_in_place(self.linear.tail(), x_pre, &mut x);
        if let Some(k) = x.iter().position(|v| !v.is_finite() || v.abs() > BLOWUP) {
            return Err(ModelError::Divergence { sample: k });
        }
        Ok((w, x, x_pre))
    }

    pub fn simulate_inputs(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
        let (_, x, _) = self.linear_response(inputs)?;
        let y: Vec<f64> = x.iter().map(|v| self.output_nonlinearity.eval(*v)).collect();
        if let Some(k) = y.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Divergence { sample: k });
        }
        Ok(y)
    }

    /// Simulated output and ∂y/∂θ for rows `skip..N`.
    pub fn sensitivities(&self, inputs: &[&[f64]], skip: usize) -> Result<(Vec<f64>, DMatrix<f64>), ModelError> {
        let (w, x, x_pre) = self.linear_response(inputs)?;
        let n = x.len();
        let rows = n.saturating_sub(skip);
        let np = self.n_params();
        let mut jac = DMatrix::<f64>::zeros(rows, np);
        let steady = self.steady() && n > 0;
        let f = self.linear.tail();
        let f1 = self.linear.den_at_one();
        let nk = self.linear.delay;

        let h = &self.output_nonlinearity;
        let nb_out = h.n_params();
        let mut y = vec![0.0; n];
        let mut hs = vec![0.0; n];
        let mut gb = vec![0.0; nb_out];
        let col0_beta = np - nb_out;
        for k in 0..n {
            h.eval_grad(x[k], &mut gb);
            y[k] = h.eval(x[k]);
            hs[k] = h.slope(x[k]);
            if k >= skip {
                for (j, g) in gb.iter().enumerate() {
                    jac[(k - skip, col0_beta + j)] = *g;
                }
            }
        }
        if let Some(k) = y.iter().chain(&hs).position(|v| !v.is_finite()) {
            return Err(ModelError::Divergence { sample: k % n.max(1) });
        }

        let mut put_col = |col: usize, s: &[f64]| {
            let mut c = jac.column_mut(col);
            for (r, k) in (skip..n).enumerate() {
                c[r] = hs[k] * s[k];
            }
        };

        let mut col = 0;
        // α: filter ∂w_i/∂α through B_i/F.
        let mut buf = vec![0.0; n];
        for (i, u) in inputs.iter().enumerate() {
            let nl = &self.input_nonlinearities[i];
            let na = nl.n_params();
            if na == 0 {
                continue;
            }
            let mut g = vec![vec![0.0; n]; na];
            let mut gk = vec![0.0; na];
            for (k, uk) in u.iter().enumerate() {
                nl.eval_grad(*uk, &mut gk);
                for p in 0..na {
                    g[p][k] = gk[p];
                }
            }
            let bi = &self.linear.numerators[i];
            let b1 = self.linear.num_at_one(i);
            for gp in &g {
                buf.fill(0.0);
                let pre = if steady { gp[0] } else { 0.0 };
                fir_accumulate(bi, nk, gp, pre, &mut buf);
                iir_in_place(f, if steady { equilibrium(f1, b1 * pre) } else { 0.0 }, &mut buf);
                put_col(col, &buf);
                col += 1;
            }
        }
        // b: shifted copies of (1/F)·q^{−n_k}·w_i.
        let mut shifted = vec![0.0; n];
        for wi in &w {
            let pre_w = if steady { wi[0] } else { 0.0 };
            buf.fill(0.0);
            fir_accumulate(&[1.0], nk, wi, pre_w, &mut buf);
            let pre_s = if steady { equilibrium(f1, pre_w) } else { 0.0 };
            iir_in_place(f, pre_s, &mut buf);
            for m in 0..self.linear.nb() {
                for k in 0..n {
                    shifted[k] = if k >= m { buf[k - m] } else { pre_s };
                }
                put_col(col, &shifted);
                col += 1;
            }
        }
        // f: shifted copies of (1/F)·(−x[k−1]).
        if !f.is_empty() {
            let x_prev = if steady { x_pre } else { 0.0 };
            for k in 0..n {
                buf[k] = -if k >= 1 { x[k - 1] } else { x_prev };
            }
            let pre_r = if steady { equilibrium(f1, -x_prev) } else { 0.0 };
            iir_in_place(f, pre_r, &mut buf);
            for j in 0..f.len() {
                for k in 0..n {
                    shifted[k] = if k >= j { buf[k - j] } else { pre_r };
                }
                put_col(col, &shifted);
                col += 1;
            }
        }
        debug_assert_eq!(col, col0_beta);
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Divergence { sample: 0 });
        }
        Ok((y, jac))
    }

    pub fn runner(&self) -> MisoRunner<'_> {
        MisoRunner::new(self)
    }
}

/// Sample-by-sample evaluation of an [`HwMiso`], matching
/// [`HwMiso::simulate_inputs`] exactly.
#[derive(Debug, Clone)]
pub struct MisoRunner<'a> {
    model: &'a HwMiso,
    /// Most recent first; length n_k + n_b per input.
    w_hist: Vec<VecDeque<f64>>,
    /// Most recent first; length n_f.
    x_hist: VecDeque<f64>,
    started: bool,
}

impl<'a> MisoRunner<'a> {
    fn new(model: &'a HwMiso) -> Self {
        MisoRunner {
            model,
            w_hist: vec![VecDeque::new(); model.inputs.len()],
            x_hist: VecDeque::new(),
            started: false,
        }
    }

    /// Advances one sample; `u` follows the model's input order.
    pub fn step(&mut self, u: &[f64]) -> f64 {
        let lin = &self.model.linear;
        let depth = lin.delay + lin.nb();
        let w: Vec<f64> = u
            .iter()
            .zip(&self.model.input_nonlinearities)
            .map(|(x, nl)| nl.eval(*x))
            .collect();
        if !self.started {
            self.started = true;
            let steady = self.model.steady();
            let mut v_pre = 0.0;
            for (i, wi) in w.iter().enumerate() {
                let pre = if steady { *wi } else { 0.0 };
                v_pre += lin.num_at_one(i) * pre;
                self.w_hist[i] = std::iter::repeat_n(pre, depth).collect();
            }
            let x_pre = if steady { equilibrium(lin.den_at_one(), v_pre) } else { 0.0 };
            self.x_hist = std::iter::repeat_n(x_pre, lin.nf()).collect();
        }
        let mut x = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let hist = &mut self.w_hist[i];
            hist.push_front(*wi);
            hist.truncate(depth);
            for (m, b) in lin.numerators[i].iter().enumerate() {
                x += b * hist[lin.delay + m];
            }
        }
        for (j, fj) in lin.tail().iter().enumerate() {
            x -= fj * self.x_hist[j];
        }
        if lin.nf() > 0 {
            self.x_hist.push_front(x);
            self.x_hist.truncate(lin.nf());
        }
        self.model.output_nonlinearity.eval(x)
    }
}
