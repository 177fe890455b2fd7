//! Extrinsic curvature of the graph and the discrete residual of the
//! evolution equation of the log projection Jacobian.
//!
//! The second fundamental form is computed in the adapted frames: the
//! ambient covariant Hessian of the graph embedding is projected onto the
//! normal frame and its tangent slots are rotated into the orthonormal
//! tangent frame, so the index conventions of the scalar evolution
//! identities apply verbatim. Formulas that contract a normal index
//! against a tangent one treat the missing normal slots as zero
//! (`h_{n+i,jk} = 0` for `i > m`).

use crate::error::{Error, Result};
use crate::flow;
use crate::frames::{self, AdaptedFrames, SingularData};
use crate::grid::{jet_at, MapState};
use nalgebra::DMatrix;

/// Second fundamental form in the adapted frames: `h[(p*n + i)*n + j]`
/// with `p` indexing normal frame vectors and `i, j` tangent ones.
#[derive(Debug, Clone)]
pub struct Sff {
    pub n: usize,
    pub m: usize,
    h: Vec<f64>,
}

impl Sff {
    /// Wrap raw components (length `m * n * n`, symmetric in the two
    /// tangent slots).
    pub fn from_components(n: usize, m: usize, h: Vec<f64>) -> Self {
        assert_eq!(h.len(), m * n * n);
        Sff { n, m, h }
    }

    /// Component with zero padding for normal indices past `m`.
    #[inline]
    pub fn component(&self, p: usize, i: usize, j: usize) -> f64 {
        if p >= self.m {
            0.0
        } else {
            self.h[(p * self.n + i) * self.n + j]
        }
    }

    pub fn raw(&self) -> &[f64] {
        &self.h
    }
}

/// Frames plus singular data at one node; shared by several diagnostics.
pub(crate) struct NodeFrames {
    pub sd: SingularData,
    pub fr: AdaptedFrames,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub jet: crate::grid::PointJet,
}

pub(crate) fn node_frames(state: &MapState, node: usize) -> Result<NodeFrames> {
    let n = state.n();
    let m = state.m();
    let jet = jet_at(state, node);
    let g = state.domain.metric_at(&jet.x)?;
    let h = state.target.metric_at(&jet.f)?;
    let df = DMatrix::from_fn(m, n, |a, i| jet.df[a * n + i]);
    let sd = frames::singular_frames(&df, &g, &h)?;
    let fr = frames::adapted_frames(&sd);
    Ok(NodeFrames { sd, fr, g, h, jet })
}

/// Singular values and frame data at a node (diagnostic helper).
pub fn node_frames_pub(state: &MapState, node: usize) -> Result<(Vec<f64>,)> {
    let nf = node_frames(state, node)?;
    Ok((nf.sd.lambdas,))
}

/// Second fundamental form of the graph at a node.
pub fn second_fundamental_form(state: &MapState, node: usize) -> Result<Sff> {
    let nf = node_frames(state, node)?;
    sff_from_frames(state, &nf)
}

pub(crate) fn sff_from_frames(state: &MapState, nf: &NodeFrames) -> Result<Sff> {
    let n = state.n();
    let m = state.m();
    let gam_dom = state.domain.christoffel_at(&nf.jet.x)?;
    let gam_tar = state.target.christoffel_at(&nf.jet.f)?;

    // Ambient covariant Hessian of the embedding in coordinate slots:
    // domain components are the domain Christoffels, target components the
    // chart Hessian corrected by the target Christoffels.
    let mut hess = vec![0.0; (n + m) * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                hess[(l * n + i) * n + j] = gam_dom[(l * n + i) * n + j];
            }
        }
    }
    for a in 0..m {
        for i in 0..n {
            for j in 0..n {
                let mut v = nf.jet.d2f[(a * n + i) * n + j];
                for b in 0..m {
                    for c in 0..m {
                        v += gam_tar[(a * m + b) * m + c] * nf.jet.df[b * n + i] * nf.jet.df[c * n + j];
                    }
                }
                hess[((n + a) * n + i) * n + j] = v;
            }
        }
    }

    // Normal projections in coordinate tangent slots.
    let mut hcoord = vec![0.0; m * n * n];
    for p in 0..m {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for l in 0..n {
                    for l2 in 0..n {
                        v += hess[(l * n + i) * n + j] * nf.g[(l, l2)] * nf.fr.normal[(l2, p)];
                    }
                }
                for a in 0..m {
                    for b in 0..m {
                        v += hess[((n + a) * n + i) * n + j] * nf.h[(a, b)] * nf.fr.normal[(n + b, p)];
                    }
                }
                hcoord[(p * n + i) * n + j] = v;
            }
        }
    }

    // Rotate tangent slots into the adapted frame; the domain block of the
    // tangent frame is exactly the change of basis from coordinate vectors.
    let mut h_out = vec![0.0; m * n * n];
    for p in 0..m {
        for a in 0..n {
            for b in a..n {
                let mut v = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        v += nf.fr.tangent[(k, a)] * nf.fr.tangent[(l, b)] * hcoord[(p * n + k) * n + l];
                    }
                }
                h_out[(p * n + a) * n + b] = v;
                h_out[(p * n + b) * n + a] = v;
            }
        }
    }
    Ok(Sff { n, m, h: h_out })
}

/// Trace of the second fundamental form over tangent slots.
pub fn mean_curvature(sff: &Sff) -> Vec<f64> {
    (0..sff.m)
        .map(|p| (0..sff.n).map(|i| sff.component(p, i, i)).sum())
        .collect()
}

/// Squared norm of the second fundamental form.
pub fn norm_a_squared(sff: &Sff) -> f64 {
    sff.h.iter().map(|v| v * v).sum()
}

/// Curvature contribution to the evolution of the log projection Jacobian:
///
/// ```text
/// Σ_i λ_i²/(1+λ_i²) [ (k₁+k₂) Σ_{j≠i} 1/(1+λ_j²) + k₂ (1-n) ]
/// ```
pub fn curvature_term_34(lambdas: &[f64], k1: f64, k2: f64, n: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let li2 = lambdas[i] * lambdas[i];
        let mut inner = 0.0;
        for j in 0..n {
            if j != i {
                inner += 1.0 / (1.0 + lambdas[j] * lambdas[j]);
            }
        }
        total += li2 / (1.0 + li2) * ((k1 + k2) * inner + k2 * (1.0 - n as f64));
    }
    total
}

/// Quadratic second-fundamental-form terms of the same evolution equation:
/// `Σ h² + Σ λ_i² h_{n+i,ik}² + 2 Σ_{i<j} λ_i λ_j h_{n+j,ik} h_{n+i,jk}`.
pub fn quadratic_terms_34(sff: &Sff, lambdas: &[f64]) -> f64 {
    let n = sff.n;
    let mut q = norm_a_squared(sff);
    for k in 0..n {
        for i in 0..n {
            let hiik = sff.component(i, i, k);
            q += lambdas[i] * lambdas[i] * hiik * hiik;
        }
        for i in 0..n {
            for j in i + 1..n {
                q += 2.0 * lambdas[i] * lambdas[j] * sff.component(j, i, k) * sff.component(i, j, k);
            }
        }
    }
    q
}

/// `ln *Ω` sampled at every node.
pub fn log_star_omega_field(state: &MapState) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.node_count()];
    for node in 0..state.node_count() {
        let nf = node_frames(state, node)?;
        out[node] = frames::star_omega(&nf.sd.lambdas).ln();
    }
    Ok(out)
}

/// Two routes to the gradient of `ln *Ω` in the adapted tangent frame:
/// a finite-difference gradient of the sampled field, and the frame
/// contraction `-Σ_i λ_i h_{n+i,ik}`. Returned as a pair for comparison.
pub fn grad_log_omega_check(
    state: &MapState,
    node: usize,
    w_field: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = state.n();
    let nf = node_frames(state, node)?;
    let sff = sff_from_frames(state, &nf)?;

    // Chart gradient of the scalar field by centered differences.
    let mut idx = vec![0usize; n];
    state.grid.axis_indices(node, &mut idx);
    let mut dw = vec![0.0; n];
    let mut ext = vec![0isize; n];
    for a in 0..n {
        for c in 0..n {
            ext[c] = idx[c] as isize;
        }
        ext[a] += 1;
        let wp = w_field[state.grid.resolve(&ext)];
        ext[a] -= 2;
        let wm = w_field[state.grid.resolve(&ext)];
        dw[a] = (wp - wm) / (2.0 * state.grid.axes[a].spacing);
    }
    // Frame components: e_k acts on functions of x through its domain block.
    let fd: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|l| nf.fr.tangent[(l, k)] * dw[l]).sum())
        .collect();
    let formula: Vec<f64> = (0..n)
        .map(|k| {
            -(0..n)
                .map(|i| nf.sd.lambdas.get(i).copied().unwrap_or(0.0) * sff.component(i, i, k))
                .sum::<f64>()
        })
        .collect();
    Ok((fd, formula))
}

/// Discrete residual of the evolution equation of `ln *Ω` between two
/// consecutive states of the flow.
///
/// The time derivative at fixed grid coordinates follows the graph
/// parametrization; the advection correction `<V_tan, ∇ ln *Ω>` converts it
/// to the normal parametrization in which the evolution identity holds:
///
/// ```text
/// residual = (w_next - w)/dt - <V_tan, ∇w> - ( Δw + Q(h, λ) + C(λ, k₁, k₂) )
/// ```
pub fn residual_34(prev: &MapState, next: &MapState, dt: f64) -> Result<Vec<f64>> {
    let mut stepper = flow::Stepper::new(prev)?;
    stepper.sweep(prev)?;
    residual_34_with_rhs(prev, next, dt, stepper.rhs())
}

pub fn residual_34_with_rhs(
    prev: &MapState,
    next: &MapState,
    dt: f64,
    rhs_prev: &[f64],
) -> Result<Vec<f64>> {
    assert!(dt > 0.0, "residual needs a positive time difference");
    let n = prev.n();
    let m = prev.m();
    let k1 = prev.domain.curvature();
    let k2 = prev.target.curvature();
    let w_prev = log_star_omega_field(prev)?;
    let w_next = log_star_omega_field(next)?;
    let lb = laplace_beltrami_field(&w_prev, prev)?;
    let mut out = vec![0.0; prev.node_count()];
    let mut idx = vec![0usize; n];
    let mut ext = vec![0isize; n];
    let mut dw = vec![0.0; n];
    for node in 0..prev.node_count() {
        let nf = node_frames(prev, node)?;
        let sff = sff_from_frames(prev, &nf)?;
        let dwdt = (w_next[node] - w_prev[node]) / dt;
        let q = quadratic_terms_34(&sff, &nf.sd.lambdas);
        let c = curvature_term_34(&nf.sd.lambdas, k1, k2, n);
        chart_gradient(&w_prev, prev, node, &mut idx, &mut ext, &mut dw);
        let vel = &rhs_prev[node * m..(node + 1) * m];
        let v_tan = flow::project_velocity_tangent(vel, &nf.fr, &nf.h, n);
        let mut advection = 0.0;
        for k in 0..n {
            let frame_deriv: f64 = (0..n).map(|l| nf.fr.tangent[(l, k)] * dw[l]).sum();
            advection += v_tan[k] * frame_deriv;
        }
        out[node] = dwdt - advection - (lb[node] + q + c);
    }
    Ok(out)
}

/// Centered chart gradient of a scalar grid field at one node.
fn chart_gradient(
    field: &[f64],
    state: &MapState,
    node: usize,
    idx: &mut [usize],
    ext: &mut [isize],
    out: &mut [f64],
) {
    let n = state.n();
    state.grid.axis_indices(node, idx);
    for a in 0..n {
        for c in 0..n {
            ext[c] = idx[c] as isize;
        }
        ext[a] += 1;
        let wp = field[state.grid.resolve(ext)];
        ext[a] -= 2;
        let wm = field[state.grid.resolve(ext)];
        out[a] = (wp - wm) / (2.0 * state.grid.axes[a].spacing);
    }
}

/// Laplace-Beltrami of a scalar field at every node, with the induced
/// metric field (including pole ghost rows) evaluated once and differenced
/// in place. Matches [`laplace_beltrami`] pointwise.
pub fn laplace_beltrami_field(field: &[f64], state: &MapState) -> Result<Vec<f64>> {
    let n = state.n();
    let nodes = state.node_count();
    // Cache Λ at every node.
    let mut lam_cache: Vec<DMatrix<f64>> = Vec::with_capacity(nodes);
    for node in 0..nodes {
        lam_cache.push(crate::grid::induced_metric_at(state, node)?);
    }
    let lam_at = |state: &MapState, ext: &[isize]| -> Result<DMatrix<f64>> {
        let in_range = ext
            .iter()
            .zip(&state.grid.axes)
            .all(|(i, a)| *i >= 0 && (*i as usize) < a.resolution);
        if in_range {
            let idx: Vec<usize> = ext.iter().map(|i| *i as usize).collect();
            Ok(lam_cache[state.grid.node_id(&idx)].clone())
        } else {
            crate::grid::induced_metric_ext(state, ext)
        }
    };
    let offsets = crate::grid::stencil_offsets(n);
    let mut out = vec![0.0; nodes];
    let mut idx = vec![0usize; n];
    let mut ext = vec![0isize; n];
    let mut e = vec![0isize; n];
    let mut dlam = vec![0.0; n * n * n];
    let mut du = vec![0.0; n];
    let mut d2u = vec![0.0; n * n];
    for node in 0..nodes {
        state.grid.axis_indices(node, &mut idx);
        for a in 0..n {
            ext[a] = idx[a] as isize;
        }
        let lam_inv = lam_cache[node]
            .clone()
            .try_inverse()
            .ok_or(Error::DegenerateMetric { min_eigenvalue: 0.0 })?;
        for a in 0..n {
            let mut ep = ext.clone();
            let mut em = ext.clone();
            ep[a] += 1;
            em[a] -= 1;
            let lp = lam_at(state, &ep)?;
            let lm = lam_at(state, &em)?;
            let dx = state.grid.axes[a].spacing;
            for i in 0..n {
                for j in 0..n {
                    dlam[(a * n + i) * n + j] = (lp[(i, j)] - lm[(i, j)]) / (2.0 * dx);
                }
            }
        }
        let sample = |off: &[isize], e: &mut Vec<isize>| -> f64 {
            for a in 0..n {
                e[a] = ext[a] + off[a];
            }
            field[state.grid.resolve(e)]
        };
        let c = field[node];
        for a in 0..n {
            let vp = sample(&offsets[1 + 2 * a], &mut e);
            let vm = sample(&offsets[2 + 2 * a], &mut e);
            let dx = state.grid.axes[a].spacing;
            du[a] = (vp - vm) / (2.0 * dx);
            d2u[a * n + a] = (vp - 2.0 * c + vm) / (dx * dx);
        }
        let mut s = 1 + 2 * n;
        for a in 0..n {
            for b in a + 1..n {
                let vpp = sample(&offsets[s], &mut e);
                let vpm = sample(&offsets[s + 1], &mut e);
                let vmp = sample(&offsets[s + 2], &mut e);
                let vmm = sample(&offsets[s + 3], &mut e);
                s += 4;
                let mixed = (vpp - vpm - vmp + vmm)
                    / (4.0 * state.grid.axes[a].spacing * state.grid.axes[b].spacing);
                d2u[a * n + b] = mixed;
                d2u[b * n + a] = mixed;
            }
        }
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut v = d2u[i * n + j];
                for k in 0..n {
                    let mut gam = 0.0;
                    for l in 0..n {
                        gam += 0.5
                            * lam_inv[(k, l)]
                            * (dlam[(i * n + l) * n + j] + dlam[(j * n + l) * n + i]
                                - dlam[(l * n + i) * n + j]);
                    }
                    v -= gam * du[k];
                }
                acc += lam_inv[(i, j)] * v;
            }
        }
        out[node] = acc;
    }
    Ok(out)
}

pub(crate) fn normal_defect_from_rhs(state: &MapState, node: usize, rhs: &[f64]) -> Result<f64> {
    let n = state.n();
    let m = state.m();
    let nf = node_frames(state, node)?;
    let sff = sff_from_frames(state, &nf)?;
    let h_mean = mean_curvature(&sff);
    let mut defect_sq = 0.0;
    for p in 0..m {
        let mut w_dot_e = 0.0;
        for a in 0..m {
            for b in 0..m {
                w_dot_e += nf.fr.normal[(n + a, p)] * nf.h[(a, b)] * rhs[b];
            }
        }
        let d = w_dot_e - h_mean[p];
        defect_sq += d * d;
    }
    Ok(defect_sq.sqrt())
}

/// Per-tick global extrema of the diagnostic quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub min_star_omega: f64,
    pub max_lambda: f64,
    /// NaN when the domain is one-dimensional.
    pub min_area_margin: f64,
    pub min_s_diag: f64,
    pub max_a_sq: f64,
    pub max_h_norm: f64,
    pub max_normal_defect: f64,
    pub max_residual_34: Option<f64>,
}

/// Evaluate the full diagnostics over a state. `rhs` must be the velocity
/// sweep of `state`; `prev` (state before the last accepted step and the
/// step size) enables the evolution residual column.
pub fn diagnostics_record(
    state: &MapState,
    prev: Option<(&MapState, f64)>,
    rhs: &[f64],
    step: usize,
    dt: f64,
) -> Result<DiagnosticsRecord> {
    let n = state.n();
    let m = state.m();
    let mut min_star_omega = f64::INFINITY;
    let mut max_lambda: f64 = 0.0;
    let mut min_area_margin = f64::INFINITY;
    let mut min_s_diag = f64::INFINITY;
    let mut max_a_sq: f64 = 0.0;
    let mut max_h_norm: f64 = 0.0;
    let mut max_normal_defect: f64 = 0.0;
    for node in 0..state.node_count() {
        let nf = node_frames(state, node)?;
        let lam = &nf.sd.lambdas;
        min_star_omega = min_star_omega.min(frames::star_omega(lam));
        max_lambda = max_lambda.max(lam[0]);
        if n >= 2 {
            min_area_margin = min_area_margin.min(frames::area_margin(lam)?);
        }
        min_s_diag = min_s_diag.min(frames::s_diag_entry(lam[0]));
        let sff = sff_from_frames(state, &nf)?;
        max_a_sq = max_a_sq.max(norm_a_squared(&sff));
        let h_mean = mean_curvature(&sff);
        let h_norm = h_mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        max_h_norm = max_h_norm.max(h_norm);
        // Normal defect from the already-built frames.
        let vel = &rhs[node * m..(node + 1) * m];
        let mut defect_sq = 0.0;
        for p in 0..m {
            let mut w_dot_e = 0.0;
            for a in 0..m {
                for b in 0..m {
                    w_dot_e += nf.fr.normal[(n + a, p)] * nf.h[(a, b)] * vel[b];
                }
            }
            let d = w_dot_e - h_mean[p];
            defect_sq += d * d;
        }
        max_normal_defect = max_normal_defect.max(defect_sq.sqrt());
    }
    if n < 2 {
        min_area_margin = f64::NAN;
    }
    let max_residual_34 = match prev {
        Some((p, dtp)) if dtp > 0.0 => {
            let res = residual_34(p, state, dtp)?;
            Some(res.iter().fold(0.0f64, |a, b| a.max(b.abs())))
        }
        _ => None,
    };
    Ok(DiagnosticsRecord {
        step,
        t: state.time,
        dt,
        min_star_omega,
        max_lambda,
        min_area_margin,
        min_s_diag,
        max_a_sq,
        max_h_norm,
        max_normal_defect,
        max_residual_34,
    })
}
