//! Constant-curvature model spaces and the product geometry they span.
//!
//! Two chart families are supported: flat tori `R^n / (P_1 Z x ... x P_n Z)`
//! with the Euclidean metric, and round 2-spheres of radius `r` in the
//! colatitude/longitude chart `(theta, phi)` with metric
//! `diag(r^2, r^2 sin^2 theta)`. Both give every evaluator in closed form.
//!
//! Curvature sign convention, fixed once for the whole crate:
//!
//! ```text
//! R(A, B, C, D) = k * ( <A,C><B,D> - <A,D><B,C> )
//! ```
//!
//! so that `R(A, B, B, A) = -k` for orthonormal `A ⟂ B`. The cross-check of
//! this convention against the frame-level contraction lives in the
//! `identities` module.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Distance to the pole set below which chart evaluation is rejected.
pub const POLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Chart {
    /// Flat torus with the given positive periods, one per axis.
    FlatTorus { periods: Vec<f64> },
    /// Round 2-sphere of the given radius in a colatitude/longitude chart.
    /// Valid colatitudes are `theta in (0, pi)`; longitudes are 2π-periodic.
    RoundSphere { radius: f64 },
}

/// A compact constant-curvature factor of the ambient product.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceForm {
    dim: usize,
    curvature: f64,
    chart: Chart,
}

/// A point of the product `M = Σ₁ × Σ₂` in chart coordinates.
///
/// The coordinate block structure realizes the splitting
/// `TM = TΣ₁ ⊕ TΣ₂`: the first `n` components of a product vector are its
/// `π₁`-projection, the rest its `π₂`-projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ProductPoint {
    pub fn new(domain: &SpaceForm, target: &SpaceForm, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        domain.validate_point(&x)?;
        target.validate_point(&y)?;
        Ok(ProductPoint { x, y })
    }
}

impl SpaceForm {
    pub fn flat_torus(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::config("domain.periods", "needs at least one axis"));
        }
        if let Some(p) = periods.iter().find(|p| !(**p > 0.0)) {
            return Err(Error::config(
                "domain.periods",
                format!("period {p} is not positive"),
            ));
        }
        Ok(SpaceForm {
            dim: periods.len(),
            curvature: 0.0,
            chart: Chart::FlatTorus { periods },
        })
    }

    pub fn round_sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::config("radius", format!("radius {radius} is not positive")));
        }
        Ok(SpaceForm {
            dim: 2,
            curvature: 1.0 / (radius * radius),
            chart: Chart::RoundSphere { radius },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sectional curvature of the space form.
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn chart(&self) -> &Chart {
        self.chart_ref()
    }

    fn chart_ref(&self) -> &Chart {
        &self.chart
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.chart, Chart::RoundSphere { .. })
    }

    pub fn radius(&self) -> Option<f64> {
        match self.chart {
            Chart::RoundSphere { radius } => Some(radius),
            _ => None,
        }
    }

    /// Chart period of the given axis, if that axis is periodic.
    pub fn axis_period(&self, axis: usize) -> Option<f64> {
        match &self.chart {
            Chart::FlatTorus { periods } => periods.get(axis).copied(),
            Chart::RoundSphere { .. } => {
                if axis == 1 {
                    Some(2.0 * std::f64::consts::PI)
                } else {
                    None
                }
            }
        }
    }

    /// Rejects points outside the valid chart domain (sphere pole set).
    pub fn validate_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::config(
                "point",
                format!("expected {} coordinates, got {}", self.dim, x.len()),
            ));
        }
        if let Chart::RoundSphere { .. } = self.chart {
            check_pole(x[0])?;
        }
        Ok(())
    }

    /// Metric components `g_ij(x)`; diagonal for both chart families but
    /// returned dense for callers that do not care.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut d = vec![0.0; self.dim];
        self.metric_diag(x, &mut d)?;
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)))
    }

    /// Diagonal of the metric, written into `out` (len = dim).
    ///
    /// Works on the analytic extension of the chart (sphere colatitudes
    /// outside `(0, pi)` are accepted as long as they stay clear of the
    /// pole set); ghost-node evaluation relies on this.
    pub fn metric_diag(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.chart {
            Chart::FlatTorus { .. } => out.iter_mut().for_each(|v| *v = 1.0),
            Chart::RoundSphere { radius } => {
                check_pole(x[0])?;
                let r2 = radius * radius;
                out[0] = r2;
                out[1] = r2 * x[0].sin().powi(2);
            }
        }
        Ok(())
    }

    /// Christoffel symbols `Γ^k_{ij}(x)` of the chart metric, layout
    /// `out[(k*n + i)*n + j]`, symmetric in `(i, j)`.
    pub fn christoffel_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut out = vec![0.0; n * n * n];
        match &self.chart {
            Chart::FlatTorus { .. } => {}
            Chart::RoundSphere { .. } => {
                check_pole(x[0])?;
                let (s, c) = x[0].sin_cos();
                // Γ^θ_{φφ} = -sinθ cosθ, Γ^φ_{θφ} = Γ^φ_{φθ} = cotθ
                out[(0 * n + 1) * n + 1] = -s * c;
                out[(1 * n + 0) * n + 1] = c / s;
                out[(1 * n + 1) * n + 0] = c / s;
            }
        }
        Ok(out)
    }

    /// The curvature tensor on chart tangent vectors at `x`, by the
    /// constant-curvature bracket extended multilinearly.
    pub fn riemann(&self, x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; self.dim];
        self.metric_diag(x, &mut g)?;
        let ip = |u: &[f64], v: &[f64]| -> f64 {
            u.iter().zip(v).zip(&g).map(|((ui, vi), gi)| ui * vi * gi).sum()
        };
        Ok(self.curvature * (ip(a, c) * ip(b, d) - ip(a, d) * ip(b, c)))
    }

    /// Sphere chart -> ambient R^3 embedding (identity-like 1D map for tori).
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        match &self.chart {
            Chart::FlatTorus { .. } => x.to_vec(),
            Chart::RoundSphere { radius } => {
                let (st, ct) = x[0].sin_cos();
                let (sp, cp) = x[1].sin_cos();
                vec![radius * st * cp, radius * st * sp, radius * ct]
            }
        }
    }

    /// Inverse of `embed` for the sphere; longitude lands in `[0, 2π)`.
    pub fn chart_of(&self, v: &[f64]) -> Vec<f64> {
        match &self.chart {
            Chart::FlatTorus { .. } => v.to_vec(),
            Chart::RoundSphere { radius } => {
                let theta = (v[2] / radius).clamp(-1.0, 1.0).acos();
                let phi = v[1].atan2(v[0]).rem_euclid(2.0 * std::f64::consts::PI);
                vec![theta, phi]
            }
        }
    }

    /// Geodesic distance between two chart points.
    pub fn geodesic_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.chart {
            Chart::FlatTorus { periods } => {
                let mut s = 0.0;
                for i in 0..self.dim {
                    let p = periods[i];
                    let mut d = (a[i] - b[i]).rem_euclid(p);
                    if d > 0.5 * p {
                        d = p - d;
                    }
                    s += d * d;
                }
                s.sqrt()
            }
            Chart::RoundSphere { radius } => {
                let ea = self.embed(a);
                let eb = self.embed(b);
                let dot = (ea[0] * eb[0] + ea[1] * eb[1] + ea[2] * eb[2]) / (radius * radius);
                radius * dot.clamp(-1.0, 1.0).acos()
            }
        }
    }
}

fn check_pole(theta: f64) -> Result<()> {
    let d = (theta - std::f64::consts::PI * (theta / std::f64::consts::PI).round()).abs();
    if d <= POLE_TOLERANCE {
        return Err(Error::PoleSingularity {
            latitude: theta,
            tolerance: POLE_TOLERANCE,
        });
    }
    Ok(())
}

/// Curvature tensor of the product `Σ₁ × Σ₂` on block vectors.
///
/// Vectors live in an orthonormal product gauge: the first `n` components
/// are the `Σ₁` block, the remaining ones the `Σ₂` block, inner products
/// Euclidean per block. This is the form the frame-level contractions of
/// the algebraic verifiers need.
pub fn product_riemann(k1: f64, k2: f64, n: usize, a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let ip = |u: &[f64], v: &[f64], lo: usize, hi: usize| -> f64 {
        (lo..hi).map(|i| u[i] * v[i]).sum::<f64>()
    };
    let m = a.len();
    let bracket = |k: f64, lo: usize, hi: usize| -> f64 {
        k * (ip(a, c, lo, hi) * ip(b, d, lo, hi) - ip(a, d, lo, hi) * ip(b, c, lo, hi))
    };
    bracket(k1, 0, n) + bracket(k2, n, m)
}
