//! Discrete-time linear block: one numerator per input over a shared monic
//! denominator, with a common input delay.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// How the filter's past is populated before the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Zero past inputs and outputs.
    #[default]
    Zero,
    /// Past inputs equal to the first sample, past output at the matching
    /// equilibrium (zero if the denominator has a pole at 1).
    SteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBlock {
    /// `numerators[i]` holds b_i0..b_i(n_b−1) for input i.
    pub numerators: Vec<Vec<f64>>,
    /// Monic denominator 1, f_1..f_nf.
    pub denominator: Vec<f64>,
    pub delay: usize,
}

impl LinearBlock {
    pub fn new(numerators: Vec<Vec<f64>>, denominator_tail: Vec<f64>, delay: usize) -> Self {
        let mut denominator = Vec::with_capacity(denominator_tail.len() + 1);
        denominator.push(1.0);
        denominator.extend(denominator_tail);
        LinearBlock {
            numerators,
            denominator,
            delay,
        }
    }

    /// Unit gain from every input, no dynamics.
    pub fn unit(inputs: usize, nb: usize, nf: usize, delay: usize) -> Self {
        let mut b = vec![0.0; nb];
        b[0] = 1.0;
        LinearBlock::new(vec![b; inputs], vec![0.0; nf], delay)
    }

    pub fn nb(&self) -> usize {
        self.numerators.first().map_or(0, Vec::len)
    }

    pub fn nf(&self) -> usize {
        self.denominator.len() - 1
    }

    pub fn tail(&self) -> &[f64] {
        &self.denominator[1..]
    }

    pub fn n_params(&self) -> usize {
        self.numerators.len() * self.nb() + self.nf()
    }

    pub fn validate(&self, inputs: usize) -> Result<(), ModelError> {
        if self.numerators.len() != inputs {
            return Err(ModelError::InvalidStructure(format!(
                "{} numerators for {inputs} inputs",
                self.numerators.len()
            )));
        }
        let nb = self.nb();
        if nb == 0 || self.numerators.iter().any(|b| b.len() != nb) {
            return Err(ModelError::InvalidStructure("numerators must share a length ≥ 1".into()));
        }
        if self.denominator.first() != Some(&1.0) {
            return Err(ModelError::InvalidStructure("denominator must be monic".into()));
        }
        let finite = self
            .numerators
            .iter()
            .flatten()
            .chain(&self.denominator)
            .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::InvalidStructure("non-finite linear coefficient".into()));
        }
        Ok(())
    }

    /// F(1) = 1 + Σ f_j.
    pub fn den_at_one(&self) -> f64 {
        self.denominator.iter().sum()
    }

    /// B_i(1).
    pub fn num_at_one(&self, i: usize) -> f64 {
        self.numerators[i].iter().sum()
    }

    /// Largest root magnitude of the denominator, via the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        let n = self.nf();
        if n == 0 {
            return 0.0;
        }
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            m[(0, j)] = -self.denominator[j + 1];
        }
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Prehistory level of `1/F` driven by a constant `v`, or 0 for a pole at 1.
pub(crate) fn equilibrium(den_at_one: f64, v: f64) -> f64 {
    if den_at_one.abs() > 1e-10 {
        v / den_at_one
    } else {
        0.0
    }
}

/// `v[k] += Σ_m b[m]·u[k − delay − m]`, with `u[k<0] = u_pre`.
pub(crate) fn fir_accumulate(b: &[f64], delay: usize, u: &[f64], u_pre: f64, v: &mut [f64]) {
    for (m, bm) in b.iter().enumerate() {
        if *bm == 0.0 {
            continue;
        }
        let lag = delay + m;
        let head = lag.min(v.len());
        for vk in v[..head].iter_mut() {
            *vk += bm * u_pre;
        }
        for (vk, uk) in v[head..].iter_mut().zip(u) {
            *vk += bm * uk;
        }
    }
}

/// In-place `y[k] = v[k] − Σ_j f[j]·y[k−1−j]`, with `y[k<0] = y_pre`.
pub(crate) fn iir_in_place(f: &[f64], y_pre: f64, y: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    for k in 0..y.len() {
        let mut acc = y[k];
        for (j, fj) in f.iter().enumerate() {
            let lag = j + 1;
            acc -= fj * if k >= lag { y[k - lag] } else { y_pre };
        }
        y[k] = acc;
    }
}
