//! The loop controller: a discrete PID that takes the sampling period as an
//! input, so its integral and derivative terms stay consistent when the
//! sensor changes period.

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
#[error("sampling period must be positive, got {0}")]
pub struct NonPositivePeriod(pub f64);

/// Integrator and last error, carried from one sample to the next.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControllerState {
    pub i_term: f64,
    pub prev_err: f64,
}

impl ControllerState {
    pub fn reset(&mut self) {
        *self = ControllerState::default();
    }

    /// One controller invocation with reference `r`, measurement `y` and
    /// sampling period `h` seconds:
    ///
    /// ```text
    /// err = r - y
    /// P   = 100 * err
    /// I   = I_prev + 200 * h * (err + err_prev) / 2
    /// D   = 2 * (err - err_prev) / h
    /// u   = P + I + D
    /// ```
    pub fn pid_step(&mut self, r: f64, y: f64, h: f64) -> Result<f64, NonPositivePeriod> {
        if !(h > 0.0) {
            return Err(NonPositivePeriod(h));
        }
        let err = r - y;
        let p = 100.0 * err;
        let i = self.i_term + 200.0 * h * (err + self.prev_err) / 2.0;
        let d = 2.0 * (err - self.prev_err) / h;
        self.i_term = i;
        self.prev_err = err;
        Ok(p + i + d)
    }
}
