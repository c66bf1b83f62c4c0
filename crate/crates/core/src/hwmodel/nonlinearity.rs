//! Static (memoryless) nonlinearity estimators.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub amplitude: f64,
    pub dilation: f64,
    pub translation: f64,
}

/// `offset + linear_slope·x + Σ amplitude·φ(dilation·(x − translation))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitNetwork {
    pub units: Vec<Unit>,
    pub offset: f64,
    pub linear_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Identity,
    PiecewiseLinear { breakpoints: Vec<f64>, values: Vec<f64> },
    Polynomial { coefficients: Vec<f64> },
    SigmoidNetwork(UnitNetwork),
    WaveletNetwork(UnitNetwork),
}

/// Nonlinearity families searched over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Identity,
    PiecewiseLinear,
    Polynomial,
    Sigmoid,
    Wavelet,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Identity => "identity",
            Family::PiecewiseLinear => "piecewise_linear",
            Family::Polynomial => "polynomial",
            Family::Sigmoid => "sigmoid",
            Family::Wavelet => "wavelet",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn mexican_hat(r: f64) -> (f64, f64) {
    let g = (-0.5 * r * r).exp();
    let psi = (1.0 - r * r) * g;
    // dψ/dr = (r³ − 3r)·e^{−r²/2}
    (psi, (r * r * r - 3.0 * r) * g)
}

/// Unit activation and its derivative with respect to its argument.
#[inline]
fn activation(wavelet: bool, r: f64) -> (f64, f64) {
    if wavelet {
        mexican_hat(r)
    } else {
        let s = sigmoid(r);
        (s, s * (1.0 - s))
    }
}

impl UnitNetwork {
    fn eval(&self, wavelet: bool, x: f64) -> f64 {
        let mut y = self.offset + self.linear_slope * x;
        for u in &self.units {
            y += u.amplitude * activation(wavelet, u.dilation * (x - u.translation)).0;
        }
        y
    }

    fn slope(&self, wavelet: bool, x: f64) -> f64 {
        let mut d = self.linear_slope;
        for u in &self.units {
            d += u.amplitude * u.dilation * activation(wavelet, u.dilation * (x - u.translation)).1;
        }
        d
    }

    /// Gradient layout: per unit (amplitude, dilation, translation), then
    /// offset, linear_slope.
    fn grad(&self, wavelet: bool, x: f64, g: &mut [f64]) -> f64 {
        let mut y = self.offset + self.linear_slope * x;
        for (k, u) in self.units.iter().enumerate() {
            let dx = x - u.translation;
            let (a, da) = activation(wavelet, u.dilation * dx);
            y += u.amplitude * a;
            g[3 * k] = a;
            g[3 * k + 1] = u.amplitude * da * dx;
            g[3 * k + 2] = -u.amplitude * da * u.dilation;
        }
        let n = 3 * self.units.len();
        g[n] = 1.0;
        g[n + 1] = x;
        y
    }
}

impl Nonlinearity {
    pub fn family(&self) -> Family {
        match self {
            Nonlinearity::Identity => Family::Identity,
            Nonlinearity::PiecewiseLinear { .. } => Family::PiecewiseLinear,
            Nonlinearity::Polynomial { .. } => Family::Polynomial,
            Nonlinearity::SigmoidNetwork(_) => Family::Sigmoid,
            Nonlinearity::WaveletNetwork(_) => Family::Wavelet,
        }
    }

    /// Near-identity member of `family` on the normalized range [-1, 1].
    /// `degree` is the polynomial degree, breakpoint count or unit count.
    pub fn identity_like(family: Family, degree: usize) -> Result<Self, ModelError> {
        let grid = |n: usize| -> Vec<f64> {
            if n == 1 {
                vec![0.0]
            } else {
                (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect()
            }
        };
        let nl = match family {
            Family::Identity => Nonlinearity::Identity,
            Family::Polynomial => {
                let mut coefficients = vec![0.0; degree + 1];
                if degree >= 1 {
                    coefficients[1] = 1.0;
                }
                Nonlinearity::Polynomial { coefficients }
            }
            Family::PiecewiseLinear => {
                let breakpoints = grid(degree);
                Nonlinearity::PiecewiseLinear {
                    values: breakpoints.clone(),
                    breakpoints,
                }
            }
            Family::Sigmoid | Family::Wavelet => {
                let dilation = (degree as f64).max(1.0);
                let net = UnitNetwork {
                    units: grid(degree)
                        .into_iter()
                        .map(|t| Unit {
                            amplitude: 0.0,
                            dilation,
                            translation: t,
                        })
                        .collect(),
                    offset: 0.0,
                    linear_slope: 1.0,
                };
                if family == Family::Sigmoid {
                    Nonlinearity::SigmoidNetwork(net)
                } else {
                    Nonlinearity::WaveletNetwork(net)
                }
            }
        };
        nl.validate()?;
        Ok(nl)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Nonlinearity::Identity => Ok(()),
            Nonlinearity::PiecewiseLinear { breakpoints, values } => {
                if breakpoints.len() < 2 || breakpoints.len() != values.len() {
                    return Err(ModelError::InvalidStructure(
                        "piecewise-linear needs ≥ 2 breakpoints and one value per breakpoint".into(),
                    ));
                }
                if !finite(breakpoints) || !finite(values) {
                    return Err(ModelError::InvalidStructure("non-finite piecewise-linear parameter".into()));
                }
                if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ModelError::InvalidStructure(
                        "piecewise-linear breakpoints must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            Nonlinearity::Polynomial { coefficients } => {
                if coefficients.len() < 2 {
                    return Err(ModelError::InvalidStructure("polynomial degree must be ≥ 1".into()));
                }
                if !finite(coefficients) {
                    return Err(ModelError::InvalidStructure("non-finite polynomial coefficient".into()));
                }
                Ok(())
            }
            Nonlinearity::SigmoidNetwork(n) | Nonlinearity::WaveletNetwork(n) => {
                let ok = n.offset.is_finite()
                    && n.linear_slope.is_finite()
                    && n.units
                        .iter()
                        .all(|u| u.amplitude.is_finite() && u.dilation.is_finite() && u.translation.is_finite());
                if ok {
                    Ok(())
                } else {
                    Err(ModelError::InvalidStructure("non-finite unit network parameter".into()))
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::PiecewiseLinear { breakpoints, values } => {
                let (k, t) = segment(breakpoints, x);
                values[k] + t * (values[k + 1] - values[k])
            }
            Nonlinearity::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Nonlinearity::SigmoidNetwork(n) => n.eval(false, x),
            Nonlinearity::WaveletNetwork(n) => n.eval(true, x),
        }
    }

    /// d/dx of the map.
    pub fn slope(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::PiecewiseLinear { breakpoints, values } => {
                let (k, _) = segment(breakpoints, x);
                (values[k + 1] - values[k]) / (breakpoints[k + 1] - breakpoints[k])
            }
            Nonlinearity::Polynomial { coefficients } => {
                let mut d = 0.0;
                for (i, c) in coefficients.iter().enumerate().skip(1).rev() {
                    d = d * x + i as f64 * c;
                }
                d
            }
            Nonlinearity::SigmoidNetwork(n) => n.slope(false, x),
            Nonlinearity::WaveletNetwork(n) => n.slope(true, x),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Nonlinearity::Identity => 0,
            Nonlinearity::PiecewiseLinear { breakpoints, values } => breakpoints.len() + values.len(),
            Nonlinearity::Polynomial { coefficients } => coefficients.len(),
            Nonlinearity::SigmoidNetwork(n) | Nonlinearity::WaveletNetwork(n) => 3 * n.units.len() + 2,
        }
    }

    /// Parameter vector: breakpoints then values; coefficients c_0..c_d;
    /// per unit (amplitude, dilation, translation) then offset, slope.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Nonlinearity::Identity => Vec::new(),
            Nonlinearity::PiecewiseLinear { breakpoints, values } => {
                breakpoints.iter().chain(values).copied().collect()
            }
            Nonlinearity::Polynomial { coefficients } => coefficients.clone(),
            Nonlinearity::SigmoidNetwork(n) | Nonlinearity::WaveletNetwork(n) => {
                let mut p = Vec::with_capacity(3 * n.units.len() + 2);
                for u in &n.units {
                    p.extend([u.amplitude, u.dilation, u.translation]);
                }
                p.push(n.offset);
                p.push(n.linear_slope);
                p
            }
        }
    }

    /// Overwrites the parameters in place. `p.len()` must equal `n_params()`.
    pub fn set_params(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.n_params());
        match self {
            Nonlinearity::Identity => {}
            Nonlinearity::PiecewiseLinear { breakpoints, values } => {
                let n = breakpoints.len();
                breakpoints.copy_from_slice(&p[..n]);
                values.copy_from_slice(&p[n..]);
            }
            Nonlinearity::Polynomial { coefficients } => coefficients.copy_from_slice(p),
            Nonlinearity::SigmoidNetwork(n) | Nonlinearity::WaveletNetwork(n) => {
                for (k, u) in n.units.iter_mut().enumerate() {
                    u.amplitude = p[3 * k];
                    u.dilation = p[3 * k + 1];
                    u.translation = p[3 * k + 2];
                }
                let m = 3 * n.units.len();
                n.offset = p[m];
                n.linear_slope = p[m + 1];
            }
        }
    }

    /// Evaluates the map and writes ∂y/∂params into `g`. Piecewise-linear
    /// breakpoint sensitivities use central differences.
    pub fn eval_grad(&self, x: f64, g: &mut [f64]) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::PiecewiseLinear { breakpoints, values } => {
                let n = breakpoints.len();
                let (k, t) = segment(breakpoints, x);
                g.fill(0.0);
                g[n + k] = 1.0 - t;
                g[n + k + 1] = t;
                let mut bp = breakpoints.clone();
                for j in 0..n {
                    let b = breakpoints[j];
                    let h = 1e-6 * b.abs().max(1.0);
                    bp[j] = b + h;
                    let up = pwl_eval(&bp, values, x);
                    bp[j] = b - h;
                    let dn = pwl_eval(&bp, values, x);
                    bp[j] = b;
                    g[j] = (up - dn) / (2.0 * h);
                }
                values[k] + t * (values[k + 1] - values[k])
            }
            Nonlinearity::Polynomial { coefficients } => {
                let mut p = 1.0;
                let mut y = 0.0;
                for (i, c) in coefficients.iter().enumerate() {
                    g[i] = p;
                    y += c * p;
                    p *= x;
                }
                y
            }
            Nonlinearity::SigmoidNetwork(n) => n.grad(false, x, g),
            Nonlinearity::WaveletNetwork(n) => n.grad(true, x, g),
        }
    }

    /// Adds `c` to the output (used to carry a constant offset).
    pub fn shift_output(&mut self, c: f64) -> bool {
        match self {
            Nonlinearity::Identity => return false,
            Nonlinearity::PiecewiseLinear { values, .. } => values.iter_mut().for_each(|v| *v += c),
            Nonlinearity::Polynomial { coefficients } => coefficients[0] += c,
            Nonlinearity::SigmoidNetwork(n) | Nonlinearity::WaveletNetwork(n) => n.offset += c,
        }
        true
    }
}

/// Segment index and interpolation fraction; outside the breakpoint range
/// the end segment is extended (`t` < 0 or > 1).
#[inline]
fn segment(bp: &[f64], x: f64) -> (usize, f64) {
    let n = bp.len();
    let k = match bp.partition_point(|b| *b <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    (k, (x - bp[k]) / (bp[k + 1] - bp[k]))
}

fn pwl_eval(bp: &[f64], values: &[f64], x: f64) -> f64 {
    let (k, t) = segment(bp, x);
    values[k] + t * (values[k + 1] - values[k])
}

/// A nonlinearity applied in normalized coordinates:
/// `center + scale·nl((x − center)/scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledNonlinearity {
    pub nl: Nonlinearity,
    pub center: f64,
    pub scale: f64,
}

impl ScaledNonlinearity {
    pub fn new(nl: Nonlinearity, center: f64, scale: f64) -> Self {
        ScaledNonlinearity { nl, center, scale }
    }

    /// No normalization.
    pub fn identity_scale(nl: Nonlinearity) -> Self {
        ScaledNonlinearity::new(nl, 0.0, 1.0)
    }

    pub fn identity() -> Self {
        ScaledNonlinearity::new(Nonlinearity::Identity, 0.0, 1.0)
    }

    /// Normalization that maps `[lo, hi]` onto `[-1, 1]`.
    pub fn over_range(nl: Nonlinearity, lo: f64, hi: f64) -> Self {
        let half = 0.5 * (hi - lo);
        let scale = if half > 1e-12 * (1.0 + lo.abs().max(hi.abs())) { half } else { 1.0 };
        ScaledNonlinearity::new(nl, 0.5 * (lo + hi), scale)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.scale.is_finite() && self.scale > 0.0 && self.center.is_finite()) {
            return Err(ModelError::InvalidStructure("normalization must be finite with positive scale".into()));
        }
        self.nl.validate()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.center + self.scale * self.nl.eval((x - self.center) / self.scale)
    }

    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        self.nl.slope((x - self.center) / self.scale)
    }

    #[inline]
    pub fn eval_grad(&self, x: f64, g: &mut [f64]) -> f64 {
        let y = self.nl.eval_grad((x - self.center) / self.scale, g);
        for v in g.iter_mut() {
            *v *= self.scale;
        }
        self.center + self.scale * y
    }

    pub fn n_params(&self) -> usize {
        self.nl.n_params()
    }

    pub fn shift_output(&mut self, c: f64) -> bool {
        self.nl.shift_output(c / self.scale)
    }
}
