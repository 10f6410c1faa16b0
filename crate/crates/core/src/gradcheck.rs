//! Central finite-difference gradient checking.
//!
//! The numeric side re-evaluates the caller's forward closure at `x ± h`
//! coordinate by coordinate, so it shares nothing with the tape's backward
//! pass and can serve as an independent oracle for it.

/// Settings for a finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Perturbation used for the central difference.
    pub h: f64,
    /// Maximum allowed relative error per coordinate.
    pub tol: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { h: 1e-6, tol: 1e-5 }
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

impl GradCheck {
    /// Compares `analytic` to central differences of `f` around `x`.
    ///
    /// `x` is restored to its original contents before returning. The error
    /// message names the first offending coordinate.
    pub fn check<F>(&self, x: &mut [f64], mut f: F, analytic: &[f64]) -> Result<(), String>
    where
        F: FnMut(&[f64]) -> f64,
    {
        assert_eq!(
            x.len(),
            analytic.len(),
            "analytic gradient length must match input length"
        );
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + self.h;
            let fp = f(x);
            x[i] = orig - self.h;
            let fm = f(x);
            x[i] = orig;
            let numeric = (fp - fm) / (2.0 * self.h);
            let err = relative_error(numeric, analytic[i]);
            if !(err <= self.tol) {
                return Err(format!(
                    "coordinate {i}: analytic {} vs numeric {} (relative error {err:.3e})",
                    analytic[i], numeric
                ));
            }
        }
        Ok(())
    }
}
