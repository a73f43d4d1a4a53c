//! Continuous LTI plant held by a zero-order hold and advanced with
//! fixed-step RK4.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Transfer function coefficients, highest power of `s` first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSpec {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    /// Integration step, seconds.
    pub dt: f64,
}

impl Default for PlantSpec {
    /// The DC motor `1 / (0.5 s^2 + 6 s + 10)`.
    fn default() -> Self {
        PlantSpec {
            num: vec![1.0],
            den: vec![0.5, 6.0, 10.0],
            dt: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PlantError {
    #[error("denominator must have degree >= 1 with a nonzero leading coefficient")]
    BadDenominator,
    #[error("transfer function must be strictly proper")]
    NotStrictlyProper,
    #[error("coefficients must be finite")]
    NonFiniteCoefficient,
    #[error("integration step must lie in (0, 0.01] s")]
    BadStep,
    #[error("plant state became non-finite")]
    NonFinite,
}

/// Controllable canonical realization of `num(s) / den(s)`.
///
/// With `den` normalized to `s^n + a[n-1] s^(n-1) + ... + a[0]`:
/// `x_i' = x_{i+1}` for `i < n-1`, `x_{n-1}' = -sum(a_i x_i) + u`, and
/// `y = sum(c_i x_i)` where `c` is the normalized numerator, lowest power first.
#[derive(Clone, Debug)]
pub struct LtiPlant {
    a: Vec<f64>,
    c: Vec<f64>,
    x: Vec<f64>,
    u_held: f64,
    dt: f64,
    scratch: [Vec<f64>; 5],
}

impl LtiPlant {
    pub fn new(spec: &PlantSpec) -> Result<Self, PlantError> {
        let all = spec.num.iter().chain(spec.den.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFiniteCoefficient);
        }
        if spec.den.len() < 2 || spec.den[0] == 0.0 {
            return Err(PlantError::BadDenominator);
        }
        let n = spec.den.len() - 1;
        // Leading zeros in the numerator do not raise its degree.
        let num: Vec<f64> = spec.num.iter().copied().skip_while(|v| *v == 0.0).collect();
        if num.len() > n {
            return Err(PlantError::NotStrictlyProper);
        }
        if !(spec.dt > 0.0 && spec.dt <= 0.01) {
            return Err(PlantError::BadStep);
        }
        let lead = spec.den[0];
        let a: Vec<f64> = spec.den[1..].iter().rev().map(|v| v / lead).collect();
        let mut c = vec![0.0; n];
        for (i, v) in num.iter().rev().enumerate() {
            c[i] = v / lead;
        }
        Ok(LtiPlant {
            a,
            c,
            x: vec![0.0; n],
            u_held: 0.0,
            dt: spec.dt,
            scratch: core::array::from_fn(|_| vec![0.0; n]),
        })
    }

    pub fn order(&self) -> usize {
        self.x.len()
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn set_state(&mut self, x: &[f64]) {
        self.x.copy_from_slice(x);
    }

    pub fn input(&self) -> f64 {
        self.u_held
    }

    /// Zero-order hold: `u` applies from now until the next call.
    pub fn set_input(&mut self, u: f64) {
        self.u_held = u;
    }

    pub fn output(&self) -> f64 {
        self.c.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Steady-state output per unit of constant input, `c_0 / a_0`.
    pub fn dc_gain(&self) -> f64 {
        self.c[0] / self.a[0]
    }

    /// Advances the state by `duration` seconds under the held input: whole
    /// `dt` steps, then one shorter step for any remainder.
    pub fn step(&mut self, duration: f64) -> Result<(), PlantError> {
        if !(duration > 0.0) {
            return Ok(());
        }
        let whole = libm::floor(duration / self.dt + 1e-9);
        for _ in 0..whole as u64 {
            self.rk4(self.dt);
        }
        let rest = duration - whole * self.dt;
        if rest > 1e-12 {
            self.rk4(rest);
        }
        if self.x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(PlantError::NonFinite)
        }
    }

    fn deriv(a: &[f64], u: f64, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out[..n - 1].copy_from_slice(&x[1..]);
        out[n - 1] = u - a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
    }

    fn rk4(&mut self, h: f64) {
        let [k1, k2, k3, k4, tmp] = &mut self.scratch;
        let (a, u, x) = (&self.a, self.u_held, &mut self.x);
        Self::deriv(a, u, x, k1);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        Self::deriv(a, u, tmp, k2);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        Self::deriv(a, u, tmp, k3);
        for i in 0..x.len() {
            tmp[i] = x[i] + h * k3[i];
        }
        Self::deriv(a, u, tmp, k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}
