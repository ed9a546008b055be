//! Backtracking line search with safeguarded quadratic/cubic interpolation.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchParams {
    pub alpha_max: f64,
    pub c1: f64,
    pub max_evals: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams { alpha_max: 1.0, c1: 1e-4, max_evals: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accepted {
    pub alpha: f64,
    pub value: f64,
    pub evals: usize,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LineSearchError {
    #[error("not a descent direction (slope {slope:e})")]
    NotDescent { slope: f64 },
    /// Best finite trial seen, if any; it need not satisfy sufficient decrease.
    #[error("no sufficient decrease after {evals} evaluations")]
    MaxEvals { evals: usize, best: Option<(f64, f64)> },
}

/// Quadratic model step from `φ(0)`, `φ'(0)` and one trial `φ(α₀)`.
pub fn quadratic_step(phi0: f64, dphi0: f64, alpha0: f64, phi_a: f64) -> f64 {
    -dphi0 * alpha0 * alpha0 / (2.0 * (phi_a - phi0 - dphi0 * alpha0))
}

/// Minimizer of the cubic through `φ(0)`, `φ'(0)`, `φ(λ)` and `φ(λp)`.
fn cubic_step(phi0: f64, dphi0: f64, lam: f64, phi_l: f64, lam_p: f64, phi_p: f64) -> f64 {
    let r1 = phi_l - phi0 - dphi0 * lam;
    let r2 = phi_p - phi0 - dphi0 * lam_p;
    let s = 1.0 / (lam - lam_p);
    let a = s * (r1 / (lam * lam) - r2 / (lam_p * lam_p));
    let b = s * (-lam_p * r1 / (lam * lam) + lam * r2 / (lam_p * lam_p));
    if a == 0.0 {
        return -dphi0 / (2.0 * b);
    }
    let disc = b * b - 3.0 * a * dphi0;
    if disc < 0.0 {
        return f64::NAN;
    }
    (-b + disc.sqrt()) / (3.0 * a)
}

/// Finds `α ∈ (0, alpha_max]` with `φ(α) ≤ φ(0) + c₁ α φ'(0)`.
///
/// `phi` returns `None` for an infeasible trial; such trials, like
/// non-finite values, halve the step.
pub fn backtrack(
    phi0: f64,
    dphi0: f64,
    params: &LineSearchParams,
    mut phi: impl FnMut(f64) -> Option<f64>,
) -> Result<Accepted, LineSearchError> {
    if !(dphi0 < 0.0) {
        return Err(LineSearchError::NotDescent { slope: dphi0 });
    }
    let mut lam = params.alpha_max;
    let mut prev: Option<(f64, f64)> = None;
    let mut best: Option<(f64, f64)> = None;
    for evals in 1..=params.max_evals {
        let value = phi(lam).filter(|v| v.is_finite());
        let Some(v) = value else {
            prev = None;
            lam *= 0.5;
            continue;
        };
        if v <= phi0 + params.c1 * lam * dphi0 {
            return Ok(Accepted { alpha: lam, value: v, evals });
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((lam, v));
        }
        let trial = match prev {
            None => quadratic_step(phi0, dphi0, lam, v),
            Some((lp, vp)) => cubic_step(phi0, dphi0, lam, v, lp, vp),
        };
        prev = Some((lam, v));
        lam = if trial.is_finite() { trial.clamp(0.1 * lam, 0.5 * lam) } else { 0.5 * lam };
    }
    Err(LineSearchError::MaxEvals { evals: params.max_evals, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_step_accepted() {
        let phi = |a: f64| (a - 1.0) * (a - 1.0);
        let r = backtrack(1.0, -2.0, &LineSearchParams::default(), |a| Some(phi(a))).unwrap();
        assert_eq!(r.alpha, 1.0);
        assert_eq!(r.evals, 1);
    }

    #[test]
    fn increasing_is_not_descent() {
        let r = backtrack(0.0, 1.0, &LineSearchParams::default(), Some);
        assert!(matches!(r, Err(LineSearchError::NotDescent { .. })));
        let r = backtrack(0.0, 0.0, &LineSearchParams::default(), Some);
        assert!(matches!(r, Err(LineSearchError::NotDescent { .. })));
    }

    #[test]
    fn first_backtrack_is_the_quadratic_interpolant() {
        // φ(α) = cos(α + 0.5): the full step 6 fails sufficient decrease.
        let phi = |a: f64| (a + 0.5).cos();
        let (p0, d0, a0) = (phi(0.0), -(0.5f64).sin(), 6.0);
        assert!(phi(a0) > p0 + 1e-4 * a0 * d0);
        let want = -d0 * a0 * a0 / (2.0 * (phi(a0) - p0 - d0 * a0));
        assert!(want > 0.1 * a0 && want < 0.5 * a0);
        let mut trials = Vec::new();
        let params = LineSearchParams { alpha_max: a0, ..Default::default() };
        let r = backtrack(p0, d0, &params, |a| {
            trials.push(a);
            Some(phi(a))
        })
        .unwrap();
        assert_eq!(trials[0], a0);
        assert!((trials[1] - want).abs() < 1e-14 * want);
        assert_eq!(r.alpha, trials[1]);
    }

    #[test]
    fn cubic_reaches_a_narrow_basin() {
        // Steep quartic: several backtracks needed.
        let phi = |a: f64| 1.0 - a + 1e4 * a.powi(4);
        let r = backtrack(1.0, -1.0, &LineSearchParams::default(), |a| Some(phi(a))).unwrap();
        assert!(r.evals > 2);
        assert!(r.value <= 1.0 - 1e-4 * r.alpha);
        assert!(r.alpha > 0.0 && r.alpha <= 1.0);
    }

    #[test]
    fn infeasible_trials_halve() {
        let mut trials = Vec::new();
        let r = backtrack(0.0, -1.0, &LineSearchParams::default(), |a| {
            trials.push(a);
            (a < 0.3).then(|| -a)
        })
        .unwrap();
        assert_eq!(&trials[..3], &[1.0, 0.5, 0.25]);
        assert_eq!(r.alpha, 0.25);
    }

    #[test]
    fn gives_up_after_max_evals() {
        let params = LineSearchParams { max_evals: 5, ..Default::default() };
        let r = backtrack(0.0, -1.0, &params, Some);
        assert!(matches!(r, Err(LineSearchError::MaxEvals { evals: 5, best: Some(_) })));
    }
}
