//! First-order solvers on the power torus: projected gradient (PGM),
//! projected conjugate gradient (PCG), Riemannian gradient (RGD) and
//! Riemannian conjugate gradient (RCG).

pub mod line_search;
mod solver;

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{add_landmark_gradient, objective, objective_and_gradient, LandmarkSet};
use crate::error::{Error, Result};
use crate::mesh::{SimplicialSurface, Vec3};
use crate::obj::fmt_f64;
use crate::torus::TorusShape;

pub use solver::{fletcher_reeves, solve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pgm,
    Pcg,
    Rgd,
    Rcg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pgm, Method::Pcg, Method::Rgd, Method::Rcg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pgm => "pgm",
            Method::Pcg => "pcg",
            Method::Rgd => "rgd",
            Method::Rcg => "rcg",
        }
    }

    pub fn is_riemannian(self) -> bool {
        matches!(self, Method::Rgd | Method::Rcg)
    }

    pub fn is_conjugate(self) -> bool {
        matches!(self, Method::Pcg | Method::Rcg)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub c1: f64,
    pub alpha_max: f64,
    pub ls_max_evals: usize,
    pub seed: u64,
    /// Replaces the Fletcher–Reeves coefficient when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_override: Option<f64>,
    /// CG restarts with steepest descent every this many iterations;
    /// 0 means the vertex count.
    #[serde(default)]
    pub restart_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Pcg,
            max_iters: 100,
            grad_tol: 1e-8,
            c1: 1e-4,
            alpha_max: 1.0,
            ls_max_evals: 40,
            seed: 0,
            beta_override: None,
            restart_every: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn with_method(method: Method) -> Self {
        OptimizerConfig { method, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::Config(format!("c1 must lie in (0, 1), got {}", self.c1)));
        }
        if !(self.alpha_max > 0.0 && self.alpha_max.is_finite()) {
            return Err(Error::Config(format!("alpha_max must be positive, got {}", self.alpha_max)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.ls_max_evals == 0 {
            return Err(Error::Config("ls_max_evals must be at least 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config(format!("grad_tol must be >= 0, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// Energy with Euclidean gradient, evaluated on the rows of a map.
pub trait Objective {
    fn value(&self, f: &[Vec3]) -> Result<f64>;
    fn value_and_gradient(&self, f: &[Vec3]) -> Result<(f64, Vec<Vec3>)>;
    /// Extra per-iteration quantity for the trace.
    fn diagnostic(&self, _f: &[Vec3]) -> Option<f64> {
        None
    }
}

pub struct StretchObjective<'a> {
    pub surface: &'a SimplicialSurface,
}

impl Objective for StretchObjective<'_> {
    fn value(&self, f: &[Vec3]) -> Result<f64> {
        Ok(objective(self.surface, f)?.e)
    }

    fn value_and_gradient(&self, f: &[Vec3]) -> Result<(f64, Vec<Vec3>)> {
        objective_and_gradient(self.surface, f).map(|(r, g)| (r.e, g))
    }
}

/// `E(f) + λ ‖f_P − g_Q‖²_F` with `g_Q` frozen. The diagnostic is the
/// landmark residual `‖f_P − g_Q‖_F`.
pub struct RegistrationObjective<'a> {
    pub surface: &'a SimplicialSurface,
    pub g_at_q: Vec<Vec3>,
    pub landmarks: &'a LandmarkSet,
}

impl Objective for RegistrationObjective<'_> {
    fn value(&self, f: &[Vec3]) -> Result<f64> {
        let e = objective(self.surface, f)?.e;
        if self.landmarks.lambda == 0.0 {
            return Ok(e);
        }
        Ok(e + self.landmarks.lambda * self.landmarks.residual_sq(f, &self.g_at_q))
    }

    fn value_and_gradient(&self, f: &[Vec3]) -> Result<(f64, Vec<Vec3>)> {
        let (r, mut g) = objective_and_gradient(self.surface, f)?;
        if self.landmarks.lambda == 0.0 {
            return Ok((r.e, g));
        }
        add_landmark_gradient(&mut g, f, &self.g_at_q, self.landmarks);
        Ok((r.e + self.landmarks.lambda * self.landmarks.residual_sq(f, &self.g_at_q), g))
    }

    fn diagnostic(&self, f: &[Vec3]) -> Option<f64> {
        Some(self.landmarks.residual_sq(f, &self.g_at_q).sqrt())
    }
}

/// How `φ'(0)` is formed for a search direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathMode {
    /// Straight line then projection; slope `⟨∇E, D⟩`.
    Embedded,
    /// Retraction; slope `⟨∇E, ψ'(0)⟩` with `ψ'` assembled row-wise.
    Retracted,
}

pub fn phi_prime_zero(grad: &[Vec3], f: &[Vec3], d: &[Vec3], shape: &TorusShape, mode: PathMode) -> Result<f64> {
    match mode {
        PathMode::Embedded => Ok(frobenius_dot(grad, d)),
        PathMode::Retracted => {
            let mut s = 0.0;
            for (i, ((g, x), di)) in grad.iter().zip(f).zip(d).enumerate() {
                s += g.dot(&shape.retraction_derivative(x, di, 0.0).map_err(|e| e.at_vertex(i))?);
            }
            Ok(s)
        }
    }
}

pub(crate) fn frobenius_dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

pub(crate) fn frobenius_norm(a: &[Vec3]) -> f64 {
    frobenius_dot(a, a).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub grad_norm: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Status {
    GradientTolerance,
    Stagnation,
    MaxIterations,
    LineSearchFailure(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub status: Status,
}

impl IterationTrace {
    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.e).collect()
    }

    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.e)
    }

    /// CSV with header `iter,E,grad_norm,alpha,beta,time_ms` and a trailing
    /// `residual` column when recorded. Absent values are empty cells;
    /// `with_time = false` blanks the timing column.
    pub fn to_csv(&self, with_time: bool) -> String {
        let has_res = self.records.iter().any(|r| r.residual.is_some());
        let mut out = String::from("iter,E,grad_norm,alpha,beta,time_ms");
        if has_res {
            out.push_str(",residual");
        }
        out.push('\n');
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        for r in &self.records {
            let t = if with_time { format!("{:.3}", r.time_ms) } else { String::new() };
            let _ = write!(out, "{},{},{},{},{},{}", r.iter, fmt_f64(r.e), fmt_f64(r.grad_norm), opt(r.alpha), opt(r.beta), t);
            if has_res {
                let _ = write!(out, ",{}", opt(r.residual));
            }
            out.push('\n');
        }
        out
    }
}
