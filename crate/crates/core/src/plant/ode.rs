//! Fixed-step classical Runge-Kutta integration.

use super::PlantError;

/// Scratch buffers for repeated RK4 steps on a fixed-size state.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` from `t` to `t + h` in place.
    pub fn step<F>(&mut self, x: &mut [f64], t: f64, h: f64, rhs: &mut F)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        rhs(t, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates `dx/dt = rhs(t, x)` from `t = 0` to `t_end` and returns the
/// state at every step, starting with `x0`.
pub fn integrate<F>(x0: &[f64], mut rhs: F, step: f64, t_end: f64) -> Result<Vec<Vec<f64>>, PlantError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(PlantError::InvalidScenario(format!("step must be positive, got {step}")));
    }
    let steps = (t_end / step).round() as usize;
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * step;
        rk.step(&mut x, t, step, &mut rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::Divergence { time: t + step });
        }
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let traj = integrate(&[1.0], |_, x, dx| dx[0] = -x[0], 1e-3, 1.0).unwrap();
        assert_eq!(traj.len(), 1001);
        assert!((traj[1000][0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_field_is_constant() {
        let traj = integrate(&[0.3, -2.0], |_, _, dx| dx.fill(0.0), 0.01, 0.5).unwrap();
        assert!(traj.iter().all(|x| x == &[0.3, -2.0]));
    }

    #[test]
    fn harmonic_oscillator_returns_after_one_period() {
        let w = 2.0 * std::f64::consts::PI;
        let rhs = |_: f64, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -w * w * x[0];
        };
        let traj = integrate(&[1.0, 0.0], rhs, 1e-4, 1.0).unwrap();
        let end = traj.last().unwrap();
        assert!((end[0] - 1.0).abs() < 1e-8);
        assert!((end[1] / w).abs() < 1e-8);
    }

    #[test]
    fn nan_reported_as_divergence() {
        let err = integrate(&[1.0], |t, _, dx| dx[0] = if t > 0.05 { f64::NAN } else { 1.0 }, 0.01, 1.0)
            .unwrap_err();
        assert!(matches!(err, PlantError::Divergence { .. }));
    }
}
