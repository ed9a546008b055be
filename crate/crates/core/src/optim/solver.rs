#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use log::{debug, warn};

use super::line_search::{backtrack, LineSearchError, LineSearchParams};
use super::{
    frobenius_norm, phi_prime_zero, IterationRecord, IterationTrace, Method, Objective, OptimizerConfig, PathMode,
    Status,
};
use crate::error::Result;
use crate::mesh::{Vec3, VertexMap};
use crate::torus::TorusShape;

/// Relative energy decrease below which the run is considered stalled.
const STAGNATION: f64 = 1e-12;

/// `‖g_new‖² / ‖g_old‖²`.
pub fn fletcher_reeves(new_norm: f64, old_norm: f64) -> f64 {
    if old_norm == 0.0 {
        return 0.0;
    }
    let q = new_norm / old_norm;
    q * q
}

fn neg(v: &[Vec3]) -> Vec<Vec3> {
    v.iter().map(|x| -x).collect()
}

struct Ctx<'a> {
    obj: &'a dyn Objective,
    shape: &'a TorusShape,
    mode: PathMode,
    params: LineSearchParams,
}

impl Ctx<'_> {
    fn path(&self, f: &[Vec3], d: &[Vec3], alpha: f64) -> Result<Vec<Vec3>> {
        let step: Vec<Vec3> = d.iter().map(|v| v * alpha).collect();
        match self.mode {
            PathMode::Embedded => {
                let q: Vec<Vec3> = f.iter().zip(&step).map(|(a, b)| a + b).collect();
                self.shape.project_rows(&q)
            }
            PathMode::Retracted => self.shape.retract_rows(f, &step),
        }
    }

    /// Gradient used for directions and norms: Euclidean for the projected
    /// methods, tangent-projected for the Riemannian ones.
    fn search_gradient(&self, g: &[Vec3], f: &[Vec3]) -> Result<Vec<Vec3>> {
        match self.mode {
            PathMode::Embedded => Ok(g.to_vec()),
            PathMode::Retracted => self.shape.project_tangent_rows(g, f),
        }
    }

    fn step(
        &self,
        f: &[Vec3],
        d: &[Vec3],
        e: f64,
        g: &[Vec3],
    ) -> Result<std::result::Result<(f64, Vec<Vec3>), LineSearchError>> {
        let slope = phi_prime_zero(g, f, d, self.shape, self.mode)?;
        let acc = backtrack(e, slope, &self.params, |a| {
            self.path(f, d, a).ok().and_then(|x| self.obj.value(&x).ok())
        });
        match acc {
            Ok(a) => Ok(Ok((a.alpha, self.path(f, d, a.alpha)?))),
            Err(err) => Ok(Err(err)),
        }
    }
}

/// Minimizes `obj` over maps into the torus starting from `f0`.
///
/// A line-search failure ends the run with [`Status::LineSearchFailure`]
/// and the last accepted iterate; evaluation errors are returned as `Err`.
pub fn solve(
    obj: &dyn Objective,
    f0: &VertexMap,
    shape: &TorusShape,
    config: &OptimizerConfig,
) -> Result<(VertexMap, IterationTrace)> {
    config.validate()?;
    f0.validate_on_torus(shape)?;
    let start = Instant::now();
    let method = config.method;
    let ctx = Ctx {
        obj,
        shape,
        mode: if method.is_riemannian() { PathMode::Retracted } else { PathMode::Embedded },
        params: LineSearchParams { alpha_max: config.alpha_max, c1: config.c1, max_evals: config.ls_max_evals },
    };
    let restart_every = if config.restart_every == 0 { f0.len().max(1) } else { config.restart_every };

    let mut f = f0.coords.clone();
    let (mut e, mut g) = obj.value_and_gradient(&f)?;
    let mut grad = ctx.search_gradient(&g, &f)?;
    let mut gnorm = frobenius_norm(&grad);
    let mut d = neg(&grad);
    let mut steepest = true;
    let mut since_restart = 0;
    let mut records = vec![IterationRecord {
        iter: 0,
        e,
        grad_norm: gnorm,
        alpha: None,
        beta: None,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
        residual: obj.diagnostic(&f),
    }];
    let mut status = Status::MaxIterations;

    for k in 1..=config.max_iters {
        if gnorm <= config.grad_tol {
            status = Status::GradientTolerance;
            break;
        }
        let mut outcome = ctx.step(&f, &d, e, &g)?;
        if outcome.is_err() && !steepest {
            debug!("{} iteration {k}: restarting with steepest descent", method.name());
            d = neg(&grad);
            since_restart = 0;
            outcome = ctx.step(&f, &d, e, &g)?;
        }
        let (alpha, f_new) = match outcome {
            Ok(x) => x,
            Err(err) => {
                warn!("{} iteration {k}: line search failed: {err}", method.name());
                status = Status::LineSearchFailure(err.to_string());
                break;
            }
        };
        let (e_new, g_new) = obj.value_and_gradient(&f_new)?;
        let grad_new = ctx.search_gradient(&g_new, &f_new)?;
        let gnorm_new = frobenius_norm(&grad_new);

        let beta = if method.is_conjugate() {
            since_restart += 1;
            let mut b = config.beta_override.unwrap_or_else(|| fletcher_reeves(gnorm_new, gnorm));
            if since_restart >= restart_every {
                b = 0.0;
                since_restart = 0;
            }
            Some(b)
        } else {
            None
        };
        d = match beta {
            Some(b) if b != 0.0 => {
                let prev = match method {
                    Method::Rcg => shape.transport_rows(&d, &f, &f_new)?,
                    _ => d,
                };
                steepest = false;
                grad_new.iter().zip(&prev).map(|(gi, di)| di * b - gi).collect()
            }
            _ => {
                steepest = true;
                neg(&grad_new)
            }
        };

        let decrease = (e - e_new) / e.abs().max(f64::MIN_POSITIVE);
        f = f_new;
        e = e_new;
        g = g_new;
        grad = grad_new;
        gnorm = gnorm_new;
        records.push(IterationRecord {
            iter: k,
            e,
            grad_norm: gnorm,
            alpha: Some(alpha),
            beta,
            time_ms: start.elapsed().as_secs_f64() * 1e3,
            residual: obj.diagnostic(&f),
        });
        if decrease < STAGNATION {
            status = Status::Stagnation;
            break;
        }
    }
    Ok((VertexMap::new(f), IterationTrace { method, records, status }))
}
