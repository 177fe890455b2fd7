//! Structured grids over the domain factor and the finite-difference
//! calculus of grid-sampled maps.
//!
//! Every field is stored node-major on a row-major rectangular grid. The
//! calculus is second-order centered throughout. Periodic axes wrap; on
//! latitude-longitude grids the latitude axis is offset half a spacing so
//! no node sits on a pole, and stencils reaching past a pole use ghost
//! values copied across it with a half-turn longitude shift (the analytic
//! continuation of the chart through the pole).

use crate::error::{Error, Result};
use crate::spaceform::SpaceForm;
use nalgebra::DMatrix;
use std::io::{BufRead, Write};

/// Eigenvalue floor below which the induced metric counts as degenerate.
pub const DEGENERATE_METRIC_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub resolution: usize,
    pub spacing: f64,
    pub offset: f64,
    pub periodic: bool,
}

/// Rectangular grid over the domain chart.
///
/// `polar` marks a latitude-longitude layout: axis 0 is the (non-periodic,
/// half-offset) latitude whose ghost nodes reflect across the poles into a
/// half-turn shift of axis 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
    pub polar: bool,
}

impl GridSpec {
    /// Grid adapted to a space form chart: uniform periodic axes on flat
    /// tori, half-offset latitude rows on spheres.
    pub fn for_space(space: &SpaceForm, resolution: &[usize]) -> Result<Self> {
        if resolution.len() != space.dim() {
            return Err(Error::config(
                "grid.resolution",
                format!("expected {} axes, got {}", space.dim(), resolution.len()),
            ));
        }
        if let Some(r) = resolution.iter().find(|r| **r < 3) {
            return Err(Error::config(
                "grid.resolution",
                format!("resolution {r} is too small (need >= 3)"),
            ));
        }
        match space.chart() {
            crate::spaceform::Chart::FlatTorus { periods } => {
                let axes = periods
                    .iter()
                    .zip(resolution)
                    .map(|(p, r)| AxisSpec {
                        resolution: *r,
                        spacing: p / *r as f64,
                        offset: 0.0,
                        periodic: true,
                    })
                    .collect();
                Ok(GridSpec { axes, polar: false })
            }
            crate::spaceform::Chart::RoundSphere { .. } => {
                if resolution[1] % 2 != 0 {
                    return Err(Error::config(
                        "grid.resolution",
                        "longitude resolution must be even for pole ghost cells",
                    ));
                }
                let dth = std::f64::consts::PI / resolution[0] as f64;
                let dph = 2.0 * std::f64::consts::PI / resolution[1] as f64;
                Ok(GridSpec {
                    axes: vec![
                        AxisSpec {
                            resolution: resolution[0],
                            spacing: dth,
                            offset: 0.5 * dth,
                            periodic: false,
                        },
                        AxisSpec {
                            resolution: resolution[1],
                            spacing: dph,
                            offset: 0.0,
                            periodic: true,
                        },
                    ],
                    polar: true,
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.resolution).product()
    }

    /// Row-major node id of in-range axis indices.
    pub fn node_id(&self, idx: &[usize]) -> usize {
        let mut id = 0;
        for (a, i) in self.axes.iter().zip(idx) {
            debug_assert!(*i < a.resolution);
            id = id * a.resolution + i;
        }
        id
    }

    /// Axis indices of a node id, written into `out`.
    pub fn axis_indices(&self, node: usize, out: &mut [usize]) {
        let mut rest = node;
        for a in (0..self.axes.len()).rev() {
            let r = self.axes[a].resolution;
            out[a] = rest % r;
            rest /= r;
        }
    }

    /// Chart coordinate of a (possibly extended/ghost) axis index.
    pub fn axis_coord(&self, axis: usize, index: isize) -> f64 {
        let a = &self.axes[axis];
        a.offset + index as f64 * a.spacing
    }

    /// Chart point of an in-range node.
    pub fn point_of(&self, node: usize) -> Vec<f64> {
        let n = self.dim();
        let mut idx = vec![0usize; n];
        self.axis_indices(node, &mut idx);
        (0..n).map(|a| self.axis_coord(a, idx[a] as isize)).collect()
    }

    /// Map extended axis indices (ghosts allowed) to the stored node id.
    ///
    /// Periodic axes wrap; on polar grids a latitude index past either pole
    /// reflects back with a half-turn shift of the longitude index.
    pub fn resolve(&self, idx: &[isize]) -> usize {
        let n = self.dim();
        debug_assert_eq!(idx.len(), n);
        let mut i0 = idx[0];
        let mut shift1: isize = 0;
        if self.polar {
            let r0 = self.axes[0].resolution as isize;
            let half = self.axes[1].resolution as isize / 2;
            if i0 < 0 {
                i0 = -1 - i0;
                shift1 = half;
            } else if i0 >= r0 {
                i0 = 2 * r0 - 1 - i0;
                shift1 = half;
            }
            debug_assert!(i0 >= 0 && i0 < r0, "latitude ghost too deep");
        }
        let mut id = 0usize;
        for a in 0..n {
            let r = self.axes[a].resolution as isize;
            let mut i = if a == 0 { i0 } else { idx[a] };
            if a == 1 {
                i += shift1;
            }
            if self.axes[a].periodic {
                i = i.rem_euclid(r);
            }
            debug_assert!(i >= 0 && i < r, "axis {a} index {i} out of range");
            id = id * r as usize + i as usize;
        }
        id
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).fold(f64::INFINITY, f64::min)
    }
}

/// Fixed stencil slot layout: center, then (+e_a, -e_a) per axis, then the
/// four corners of every axis pair (a < b) in the order ++, +-, -+, --.
pub fn stencil_offsets(n: usize) -> Vec<Vec<isize>> {
    let mut out = vec![vec![0; n]];
    for a in 0..n {
        let mut p = vec![0; n];
        p[a] = 1;
        out.push(p.clone());
        p[a] = -1;
        out.push(p);
    }
    for a in 0..n {
        for b in a + 1..n {
            for (sa, sb) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let mut p = vec![0; n];
                p[a] = sa;
                p[b] = sb;
                out.push(p);
            }
        }
    }
    out
}

pub fn stencil_len(n: usize) -> usize {
    1 + 2 * n + 2 * n * (n - 1)
}

/// Precomputed neighbor ids for every node and stencil slot.
pub struct StencilTable {
    pub slots: usize,
    pub table: Vec<u32>,
}

impl StencilTable {
    pub fn build(grid: &GridSpec) -> Self {
        let n = grid.dim();
        let offsets = stencil_offsets(n);
        let slots = offsets.len();
        let nodes = grid.node_count();
        let mut table = vec![0u32; nodes * slots];
        let mut idx = vec![0usize; n];
        let mut ext = vec![0isize; n];
        for node in 0..nodes {
            grid.axis_indices(node, &mut idx);
            for (s, off) in offsets.iter().enumerate() {
                for a in 0..n {
                    ext[a] = idx[a] as isize + off[a];
                }
                table[node * slots + s] = grid.resolve(&ext) as u32;
            }
        }
        StencilTable { slots, table }
    }

    #[inline]
    pub fn row(&self, node: usize) -> &[u32] {
        &self.table[node * self.slots..(node + 1) * self.slots]
    }
}

/// A grid-sampled map between two space forms at a fixed time.
#[derive(Debug, Clone)]
pub struct MapState {
    pub domain: SpaceForm,
    pub target: SpaceForm,
    pub grid: GridSpec,
    /// Node-major values: `values[node * m + alpha]`.
    pub values: Vec<f64>,
    pub time: f64,
}

impl MapState {
    pub fn from_fn(
        domain: SpaceForm,
        target: SpaceForm,
        grid: GridSpec,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let m = target.dim();
        let nodes = grid.node_count();
        let mut values = vec![0.0; nodes * m];
        for node in 0..nodes {
            let x = grid.point_of(node);
            let y = f(&x);
            assert_eq!(y.len(), m);
            values[node * m..(node + 1) * m].copy_from_slice(&y);
        }
        MapState {
            domain,
            target,
            grid,
            values,
            time: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.domain.dim()
    }

    pub fn m(&self) -> usize {
        self.target.dim()
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    #[inline]
    pub fn value(&self, node: usize) -> &[f64] {
        let m = self.target.dim();
        &self.values[node * m..(node + 1) * m]
    }

    /// Periods of the target chart axes (0 when an axis is not periodic);
    /// neighbor values of periodic components are unwrapped to the center
    /// node's branch before differencing.
    pub fn target_periods(&self) -> Vec<f64> {
        (0..self.m())
            .map(|a| self.target.axis_period(a).unwrap_or(0.0))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// First and second chart derivatives of the map at one node.
#[derive(Debug, Clone)]
pub struct PointJet {
    /// Chart point on the domain.
    pub x: Vec<f64>,
    /// Map value, unaffected by unwrapping.
    pub f: Vec<f64>,
    /// `df[alpha * n + i]` = ∂f^α/∂x^i.
    pub df: Vec<f64>,
    /// `d2f[(alpha * n + i) * n + j]`, symmetric in `(i, j)`.
    pub d2f: Vec<f64>,
}

/// Gather the stencil values around `node` (periodic target components
/// unwrapped to the center branch) and form the centered jet.
///
/// `neighbors` must be the node's stencil row; `gathered` is scratch of
/// length `slots * m`; `df`/`d2f` are written in the `PointJet` layout.
#[inline]
pub fn jet_into(
    state: &MapState,
    node: usize,
    neighbors: &[u32],
    target_periods: &[f64],
    gathered: &mut [f64],
    df: &mut [f64],
    d2f: &mut [f64],
) {
    let n = state.grid.dim();
    let m = state.target.dim();
    let slots = neighbors.len();
    let center = &state.values[node * m..node * m + m];
    for (s, &nb) in neighbors.iter().enumerate() {
        let vals = &state.values[nb as usize * m..nb as usize * m + m];
        for a in 0..m {
            let mut v = vals[a];
            let p = target_periods[a];
            if p > 0.0 {
                v -= p * ((v - center[a]) / p).round();
            }
            gathered[s * m + a] = v;
        }
    }
    let _ = slots;
    for alpha in 0..m {
        let c = gathered[alpha];
        for a in 0..n {
            let vp = gathered[(1 + 2 * a) * m + alpha];
            let vm = gathered[(2 + 2 * a) * m + alpha];
            let dx = state.grid.axes[a].spacing;
            df[alpha * n + a] = (vp - vm) / (2.0 * dx);
            d2f[(alpha * n + a) * n + a] = (vp - 2.0 * c + vm) / (dx * dx);
        }
        let mut s = 1 + 2 * n;
        for a in 0..n {
            for b in a + 1..n {
                let vpp = gathered[s * m + alpha];
                let vpm = gathered[(s + 1) * m + alpha];
                let vmp = gathered[(s + 2) * m + alpha];
                let vmm = gathered[(s + 3) * m + alpha];
                s += 4;
                let dxa = state.grid.axes[a].spacing;
                let dxb = state.grid.axes[b].spacing;
                let mixed = (vpp - vpm - vmp + vmm) / (4.0 * dxa * dxb);
                d2f[(alpha * n + a) * n + b] = mixed;
                d2f[(alpha * n + b) * n + a] = mixed;
            }
        }
    }
}

/// Centered second-order jet of the map at a node (ghost construction is
/// total, so this cannot fail).
pub fn jet_at(state: &MapState, node: usize) -> PointJet {
    let n = state.grid.dim();
    let m = state.target.dim();
    let offsets = stencil_offsets(n);
    let mut idx = vec![0usize; n];
    state.grid.axis_indices(node, &mut idx);
    let mut ext = vec![0isize; n];
    let neighbors: Vec<u32> = offsets
        .iter()
        .map(|off| {
            for a in 0..n {
                ext[a] = idx[a] as isize + off[a];
            }
            state.grid.resolve(&ext) as u32
        })
        .collect();
    let periods = state.target_periods();
    let mut gathered = vec![0.0; neighbors.len() * m];
    let mut df = vec![0.0; m * n];
    let mut d2f = vec![0.0; m * n * n];
    jet_into(state, node, &neighbors, &periods, &mut gathered, &mut df, &mut d2f);
    PointJet {
        x: state.grid.point_of(node),
        f: state.value(node).to_vec(),
        df,
        d2f,
    }
}

/// Induced metric `Λ_ij = g_ij + h_αβ ∂f^α/∂x^i ∂f^β/∂x^j` of the graph.
pub fn induced_metric(jet: &PointJet, g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let m = h.nrows();
    let mut lam = g.clone();
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for a in 0..m {
                for b in 0..m {
                    v += h[(a, b)] * jet.df[a * n + i] * jet.df[b * n + j];
                }
            }
            lam[(i, j)] += v;
        }
    }
    let min_eig = lam.symmetric_eigenvalues().min();
    if min_eig <= DEGENERATE_METRIC_TOLERANCE {
        return Err(Error::DegenerateMetric { min_eigenvalue: min_eig });
    }
    Ok(lam)
}

/// Induced metric at a node, evaluating the chart metrics on the fly.
pub fn induced_metric_at(state: &MapState, node: usize) -> Result<DMatrix<f64>> {
    let jet = jet_at(state, node);
    let g = state.domain.metric_at(&jet.x)?;
    let h = state.target.metric_at(&jet.f)?;
    induced_metric(&jet, &g, &h)
}

/// Induced metric at an extended (ghost-allowed) axis index, computed from
/// the analytically continued chart. Used by the evolving-metric Laplacian.
pub(crate) fn induced_metric_ext(state: &MapState, ext: &[isize]) -> Result<DMatrix<f64>> {
    let n = state.grid.dim();
    let m = state.target.dim();
    let node = state.grid.resolve(ext);
    // Jet of the extended field at the ghost coordinate: gather around the
    // extended index so derivatives are taken in the continued chart.
    let offsets = stencil_offsets(n);
    let mut e = vec![0isize; n];
    let neighbors: Vec<u32> = offsets
        .iter()
        .map(|off| {
            for a in 0..n {
                e[a] = ext[a] + off[a];
            }
            state.grid.resolve(&e) as u32
        })
        .collect();
    let periods = state.target_periods();
    let mut gathered = vec![0.0; neighbors.len() * m];
    let mut df = vec![0.0; m * n];
    let mut d2f = vec![0.0; m * n * n];
    jet_into(state, node, &neighbors, &periods, &mut gathered, &mut df, &mut d2f);
    let x: Vec<f64> = (0..n).map(|a| state.grid.axis_coord(a, ext[a])).collect();
    let jet = PointJet {
        x: x.clone(),
        f: state.value(node).to_vec(),
        df,
        d2f,
    };
    let g = state.domain.metric_at(&x)?;
    let h = state.target.metric_at(&jet.f)?;
    induced_metric(&jet, &g, &h)
}

/// Laplace-Beltrami operator of the evolving graph metric applied to a
/// scalar grid field at one node:
///
/// ```text
/// Δu = Λ^{ij} ( ∂²u/∂x^i∂x^j - Γ̃^k_{ij} ∂u/∂x^k )
/// ```
///
/// with the induced Christoffels `Γ̃` obtained by centered differencing of
/// the induced metric field.
pub fn laplace_beltrami(field: &[f64], state: &MapState, node: usize) -> Result<f64> {
    let n = state.grid.dim();
    let mut idx = vec![0usize; n];
    state.grid.axis_indices(node, &mut idx);
    let ext: Vec<isize> = idx.iter().map(|i| *i as isize).collect();

    let lam = induced_metric_ext(state, &ext)?;
    let lam_inv = lam
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMetric { min_eigenvalue: 0.0 })?;

    // ∂_a Λ_ij by centered differences of the induced metric field.
    let mut dlam = vec![0.0; n * n * n];
    for a in 0..n {
        let mut ep = ext.clone();
        let mut em = ext.clone();
        ep[a] += 1;
        em[a] -= 1;
        let lp = induced_metric_ext(state, &ep)?;
        let lm = induced_metric_ext(state, &em)?;
        let dx = state.grid.axes[a].spacing;
        for i in 0..n {
            for j in 0..n {
                dlam[(a * n + i) * n + j] = (lp[(i, j)] - lm[(i, j)]) / (2.0 * dx);
            }
        }
    }
    // Γ̃^k_{ij} = ½ Λ^{kl} (∂_i Λ_lj + ∂_j Λ_li - ∂_l Λ_ij)
    let gamma = |k: usize, i: usize, j: usize| -> f64 {
        let mut v = 0.0;
        for l in 0..n {
            v += 0.5
                * lam_inv[(k, l)]
                * (dlam[(i * n + l) * n + j] + dlam[(j * n + l) * n + i] - dlam[(l * n + i) * n + j]);
        }
        v
    };

    // Scalar jet of the field (no unwrapping, plain scalar).
    let offsets = stencil_offsets(n);
    let mut e = vec![0isize; n];
    let sample = |off: &[isize], e: &mut Vec<isize>| -> f64 {
        for a in 0..n {
            e[a] = ext[a] + off[a];
        }
        field[state.grid.resolve(e)]
    };
    let c = field[node];
    let mut du = vec![0.0; n];
    let mut d2u = vec![0.0; n * n];
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

    let mut out = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut v = d2u[i * n + j];
            for k in 0..n {
                v -= gamma(k, i, j) * du[k];
            }
            out += lam_inv[(i, j)] * v;
        }
    }
    Ok(out)
}

/// Minimum distance of the image to the target chart's pole set, or
/// `None` when the target chart has no poles.
pub fn image_pole_distance(state: &MapState) -> Option<f64> {
    if !state.target.is_sphere() {
        return None;
    }
    let m = state.m();
    let mut min = f64::INFINITY;
    for node in 0..state.node_count() {
        let th = state.values[node * m];
        min = min.min(th.min(std::f64::consts::PI - th));
    }
    Some(min)
}

/// Rotate the target sphere so the chart mean of the image moves to the
/// equator, rewriting the stored values in the rotated chart. The map is
/// unchanged as a geometric object. Returns `None` for non-sphere targets.
pub fn recenter_target_chart(state: &MapState) -> Option<MapState> {
    if !state.target.is_sphere() {
        return None;
    }
    let m = state.m();
    let nodes = state.node_count();
    // Chordal mean of the embedded image (Karcher-style center).
    let mut mean = [0.0f64; 3];
    for node in 0..nodes {
        let p = state.target.embed(&state.values[node * m..node * m + m]);
        mean[0] += p[0];
        mean[1] += p[1];
        mean[2] += p[2];
    }
    let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
    let mu = if norm > 1e-12 {
        [mean[0] / norm, mean[1] / norm, mean[2] / norm]
    } else {
        [0.0, 0.0, 1.0]
    };
    // Minimal rotation taking mu to the equator: rotate about z x mu by the
    // latitude excess; if mu is polar, any meridian direction serves.
    let zxm = [-mu[1], mu[0], 0.0];
    let axis_norm = (zxm[0] * zxm[0] + zxm[1] * zxm[1]).sqrt();
    let axis = if axis_norm > 1e-12 {
        [zxm[0] / axis_norm, zxm[1] / axis_norm, 0.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let colat = mu[2].clamp(-1.0, 1.0).acos();
    let angle = std::f64::consts::FRAC_PI_2 - colat; // rotate by -(angle) about axis moves mu down to equator
    let rot = rotation_matrix(axis, -angle);

    let mut out = state.clone();
    for node in 0..nodes {
        let p = state.target.embed(&state.values[node * m..node * m + m]);
        let q = [
            rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2],
            rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2],
            rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2],
        ];
        let c = state.target.chart_of(&q);
        out.values[node * m..node * m + m].copy_from_slice(&c);
    }
    Some(out)
}

fn rotation_matrix(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let (x, y, z) = (axis[0], axis[1], axis[2]);
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Write a snapshot CSV: header `i1,...,in,x1,...,xn,f1,...,fm`, one row
/// per node in row-major order, 17 significant digits.
pub fn write_snapshot(state: &MapState, path: &std::path::Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = state.n();
    let m = state.m();
    let mut header = Vec::new();
    for i in 1..=n {
        header.push(format!("i{i}"));
    }
    for i in 1..=n {
        header.push(format!("x{i}"));
    }
    for a in 1..=m {
        header.push(format!("f{a}"));
    }
    writeln!(w, "{}", header.join(","))?;
    let mut idx = vec![0usize; n];
    for node in 0..state.node_count() {
        state.grid.axis_indices(node, &mut idx);
        let x = state.grid.point_of(node);
        let mut row = Vec::with_capacity(2 * n + m);
        for i in &idx {
            row.push(i.to_string());
        }
        for xi in &x {
            row.push(format!("{xi:.16e}"));
        }
        for v in state.value(node) {
            row.push(format!("{v:.16e}"));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read back the `f` columns of a snapshot written by [`write_snapshot`]
/// into a state built over the same grids.
pub fn read_snapshot_values(
    path: &std::path::Path,
    n: usize,
    m: usize,
    expected_nodes: usize,
) -> Result<Vec<f64>> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty snapshot".into()))??;
    let cols = header.split(',').count();
    if cols != 2 * n + m {
        return Err(Error::Parse(format!(
            "snapshot has {cols} columns, expected {}",
            2 * n + m
        )));
    }
    let mut values = Vec::with_capacity(expected_nodes * m);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Parse(format!("bad snapshot row: {line}")));
        }
        for a in 0..m {
            let v: f64 = fields[2 * n + a]
                .parse()
                .map_err(|e| Error::Parse(format!("bad float: {e}")))?;
            values.push(v);
        }
    }
    if values.len() != expected_nodes * m {
        return Err(Error::Parse(format!(
            "snapshot has {} nodes, expected {expected_nodes}",
            values.len() / m
        )));
    }
    Ok(values)
}
