//! Geometry of the ring torus T²(R, r) and of its power manifold.
//!
//! Angles are never materialized where a cosine/sine pair suffices; this keeps
//! the projection free of `atan2` branch cuts. Row-wise variants at the bottom
//! act on whole vertex maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Squared radial distances below this are treated as singular.
pub const SINGULAR_EPS: f64 = 1e-28;

/// Relative tolerance (times `r`) for a point to count as on the torus.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusShape {
    #[serde(rename = "R")]
    pub major: f64,
    #[serde(rename = "r")]
    pub minor: f64,
}

impl Default for TorusShape {
    fn default() -> Self {
        TorusShape { major: 2.0, minor: 1.0 }
    }
}

/// A (cos, sin) pair.
pub type CosSin = (f64, f64);

pub fn angles_theta(q: &Vec3) -> Result<CosSin> {
    let rho2 = q.x * q.x + q.y * q.y;
    if rho2 < SINGULAR_EPS {
        return Err(Error::AxisSingularity { vertex: None });
    }
    let rho = rho2.sqrt();
    Ok((q.x / rho, q.y / rho))
}

impl TorusShape {
    pub fn new(major: f64, minor: f64) -> Result<Self> {
        if !(minor > 0.0 && major > minor && major.is_finite()) {
            return Err(Error::InvalidShape { major, minor });
        }
        Ok(TorusShape { major, minor })
    }

    /// Point with azimuth `theta` and tube angle `phi`.
    pub fn embed(&self, theta: f64, phi: f64) -> Vec3 {
        self.embed_cs((theta.cos(), theta.sin()), (phi.cos(), phi.sin()))
    }

    pub fn embed_cs(&self, (ct, st): CosSin, (cp, sp): CosSin) -> Vec3 {
        let rho = self.major + self.minor * cp;
        Vec3::new(rho * ct, rho * st, self.minor * sp)
    }

    /// Surface area 4π²Rr.
    pub fn area(&self) -> f64 {
        4.0 * std::f64::consts::PI.powi(2) * self.major * self.minor
    }

    /// Distance from `q` to the torus, |√((ρ − R)² + z²) − r|.
    pub fn distance(&self, q: &Vec3) -> f64 {
        let c = q.x.hypot(q.y) - self.major;
        (c.hypot(q.z) - self.minor).abs()
    }

    pub fn check_on_manifold(&self, q: &Vec3) -> Result<()> {
        let distance = self.distance(q);
        if !(distance <= ON_MANIFOLD_TOL * self.minor) {
            return Err(Error::NotOnManifold { distance, vertex: None });
        }
        Ok(())
    }

    pub fn angles_phi(&self, q: &Vec3) -> Result<CosSin> {
        let c = q.x.hypot(q.y) - self.major;
        let d2 = c * c + q.z * q.z;
        if d2 < SINGULAR_EPS {
            return Err(Error::CoreSingularity { vertex: None });
        }
        let d = d2.sqrt();
        Ok((c / d, q.z / d))
    }

    /// Nearest point of the torus to `q`.
    pub fn project_point(&self, q: &Vec3) -> Result<Vec3> {
        let t = angles_theta(q)?;
        let p = self.angles_phi(q)?;
        Ok(self.embed_cs(t, p))
    }

    /// Center of the tube cross-section through `x`.
    fn core_point(&self, x: &Vec3) -> Result<Vec3> {
        let (ct, st) = angles_theta(x)?;
        Ok(Vec3::new(self.major * ct, self.major * st, 0.0))
    }

    /// Outward unit normal at an on-manifold point.
    pub fn normal(&self, x: &Vec3) -> Result<Vec3> {
        let fhat = x - self.core_point(x)?;
        let n = fhat.norm();
        if n * n < SINGULAR_EPS {
            return Err(Error::CoreSingularity { vertex: None });
        }
        Ok(fhat / n)
    }

    /// Orthogonal projection of `v` onto the tangent plane at `x`.
    pub fn project_tangent(&self, v: &Vec3, x: &Vec3) -> Result<Vec3> {
        self.check_on_manifold(x)?;
        let n = self.normal(x)?;
        Ok(v - n * n.dot(v))
    }

    /// Projection of the point `q` onto the affine tangent plane through `x`:
    /// shift to the tube center, drop the normal component, then add back the
    /// normal offset and the center.
    pub fn affine_tangent_point(&self, q: &Vec3, x: &Vec3) -> Result<Vec3> {
        self.check_on_manifold(x)?;
        let c = self.core_point(x)?;
        let fhat = x - c;
        let qhat = q - c;
        let ff = fhat.dot(&fhat);
        if ff < SINGULAR_EPS {
            return Err(Error::CoreSingularity { vertex: None });
        }
        Ok(qhat - fhat * (fhat.dot(&qhat) / ff) + fhat + c)
    }

    pub fn retract(&self, x: &Vec3, xi: &Vec3) -> Result<Vec3> {
        if *xi == Vec3::zeros() {
            return Ok(*x);
        }
        self.project_point(&(x + xi))
    }

    /// Move the tangent vector `xi` at `x` to the tangent plane at `y` by a
    /// rotation about the z-axis followed by a rotation of the tube
    /// cross-section about its tangent axis.
    ///
    /// The composite rigid motion carries `x` onto `y`; vectors are moved by
    /// its linear part only.
    pub fn transport(&self, xi: &Vec3, x: &Vec3, y: &Vec3) -> Result<Vec3> {
        let (ctx, stx) = angles_theta(x)?;
        let (cty, sty) = angles_theta(y)?;
        let (cpx, spx) = self.angles_phi(x)?;
        let (cpy, spy) = self.angles_phi(y)?;

        // Azimuthal rotation by theta_y - theta_x.
        let cd = cty * ctx + sty * stx;
        let sd = sty * ctx - cty * stx;
        let v = Vec3::new(cd * xi.x - sd * xi.y, sd * xi.x + cd * xi.y, xi.z);

        // Rotating by angle a about k = (-sin θy, cos θy, 0) sends tube angle
        // phi to phi - a, so a = phi_x - phi_y.
        let ca = cpx * cpy + spx * spy;
        let sa = spx * cpy - cpx * spy;
        let k = Vec3::new(-sty, cty, 0.0);
        Ok(rodrigues(&v, &k, ca, sa))
    }

    /// The rigid motion of [`Self::transport`] applied to a point: z-rotation,
    /// translation by `-y'`, cross-section rotation, translation by `+y'`.
    pub fn transport_point(&self, p: &Vec3, x: &Vec3, y: &Vec3) -> Result<Vec3> {
        let (ctx, stx) = angles_theta(x)?;
        let (cty, sty) = angles_theta(y)?;
        let (cpx, spx) = self.angles_phi(x)?;
        let (cpy, spy) = self.angles_phi(y)?;
        let cd = cty * ctx + sty * stx;
        let sd = sty * ctx - cty * stx;
        let v = Vec3::new(cd * p.x - sd * p.y, sd * p.x + cd * p.y, p.z);
        let yc = Vec3::new(self.major * cty, self.major * sty, 0.0);
        let ca = cpx * cpy + spx * spy;
        let sa = spx * cpy - cpx * spy;
        let k = Vec3::new(-sty, cty, 0.0);
        Ok(rodrigues(&(v - yc), &k, ca, sa) + yc)
    }

    /// Row-wise [`Self::project_point`].
    pub fn project_rows(&self, q: &[Vec3]) -> Result<Vec<Vec3>> {
        q.iter()
            .enumerate()
            .map(|(i, p)| self.project_point(p).map_err(|e| e.at_vertex(i)))
            .collect()
    }

    /// Row-wise tangent projection of `v` at the rows of `x`.
    pub fn project_tangent_rows(&self, v: &[Vec3], x: &[Vec3]) -> Result<Vec<Vec3>> {
        v.iter()
            .zip(x)
            .enumerate()
            .map(|(i, (vi, xi))| self.project_tangent(vi, xi).map_err(|e| e.at_vertex(i)))
            .collect()
    }

    /// Row-wise retraction, `Π(x + ξ)`.
    pub fn retract_rows(&self, x: &[Vec3], xi: &[Vec3]) -> Result<Vec<Vec3>> {
        x.iter()
            .zip(xi)
            .enumerate()
            .map(|(i, (p, d))| self.retract(p, d).map_err(|e| e.at_vertex(i)))
            .collect()
    }

    /// Row-wise transport of `xi` from the rows of `x` to the rows of `y`.
    pub fn transport_rows(&self, xi: &[Vec3], x: &[Vec3], y: &[Vec3]) -> Result<Vec<Vec3>> {
        xi.iter()
            .zip(x.iter().zip(y))
            .enumerate()
            .map(|(i, (v, (a, b)))| self.transport(v, a, b).map_err(|e| e.at_vertex(i)))
            .collect()
    }

    /// Derivative with respect to `alpha` of `Π(x + alpha d)` for a single row.
    pub fn retraction_derivative(&self, x: &Vec3, d: &Vec3, alpha: f64) -> Result<Vec3> {
        let (r_big, r) = (self.major, self.minor);
        let p = x + d * alpha;
        let a = d.x * p.x + d.y * p.y;
        let b2 = p.x * p.x + p.y * p.y;
        if b2 < SINGULAR_EPS {
            return Err(Error::AxisSingularity { vertex: None });
        }
        let b = b2.sqrt();
        let c = b - r_big;
        let dz = p.z;
        let g2 = c * c + dz * dz;
        if g2 < SINGULAR_EPS {
            return Err(Error::CoreSingularity { vertex: None });
        }
        let g = g2.sqrt();
        let h = (a * c / b + d.z * dz) / (g * g2);
        let b3 = b * b2;

        let dcos_t = d.x / b - p.x * a / b3;
        let dsin_t = d.y / b - p.y * a / b3;
        let dcos_p = a / (b * g) - c * h;
        let dsin_p = d.z / g - dz * h;
        let (cos_t, sin_t) = (p.x / b, p.y / b);
        let cos_p = c / g;
        let rho = r_big + r * cos_p;
        Ok(Vec3::new(
            rho * dcos_t + r * cos_t * dcos_p,
            rho * dsin_t + r * sin_t * dcos_p,
            r * dsin_p,
        ))
    }
}

/// Rodrigues rotation of `v` about the unit axis `k` by the angle with
/// cosine `c` and sine `s`.
fn rodrigues(v: &Vec3, k: &Vec3, c: f64, s: f64) -> Vec3 {
    v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
}
