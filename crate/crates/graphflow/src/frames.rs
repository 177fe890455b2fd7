//! Singular value frames of the differential and the algebra of the
//! parallel difference tensor `S`.
//!
//! For a linear map `df : (T_x Σ₁, g) -> (T_y Σ₂, h)` the generalized SVD
//! produces nonnegative singular values `λ_i`, a `g`-orthonormal domain
//! basis `a_i` and an `h`-orthonormal target basis `a_{n+p}` with
//! `df(a_i) = λ_i a_{n+i}` for `i <= rank`. Out of these the adapted
//! orthonormal frames of the graph are
//!
//! ```text
//! e_i     = (a_i + λ_i a_{n+i}) / sqrt(1 + λ_i²)      (tangent, i <= r)
//! e_{n+p} = (a_{n+p} - λ_p a_p) / sqrt(1 + λ_p²)      (normal,  p <= r)
//! ```
//!
//! and `S(X, Y) = <π₁X, π₁Y> - <π₂X, π₂Y>` restricts to the graph with the
//! diagonal `(1 - λ_i²)/(1 + λ_i²)`. The module also builds the induced
//! operator on the second exterior power, whose convexity encodes the
//! area-decreasing condition.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative cutoff below which a singular value is treated as zero.
pub const RANK_RELATIVE_CUTOFF: f64 = 1e-12;
/// Absolute cutoff used when the largest singular value itself vanishes.
pub const RANK_ABSOLUTE_CUTOFF: f64 = 1e-14;
/// Two singular values closer than this (relative to `1 + λ₁`) share a gauge group.
const TIE_TOLERANCE: f64 = 1e-10;

/// Output of the generalized SVD of `df` with respect to `(g, h)`.
#[derive(Debug, Clone)]
pub struct SingularData {
    /// Singular values, length `n`, sorted descending, `λ_i = 0` for `i > rank`.
    pub lambdas: Vec<f64>,
    pub rank: usize,
    /// Columns are the `g`-orthonormal domain basis `a_i` in chart coordinates.
    pub domain_basis: DMatrix<f64>,
    /// Columns are the `h`-orthonormal target basis `a_{n+p}` in chart coordinates.
    pub target_basis: DMatrix<f64>,
}

/// The adapted orthonormal frames of the graph, in product coordinates:
/// first `n` components are the Σ₁ block, the rest the Σ₂ block.
#[derive(Debug, Clone)]
pub struct AdaptedFrames {
    /// `(n+m) x n`, column `i` is the tangent frame vector `e_i`.
    pub tangent: DMatrix<f64>,
    /// `(n+m) x m`, column `p` is the normal frame vector `e_{n+p}`.
    pub normal: DMatrix<f64>,
}

/// Generalized SVD of `df` (an `m x n` matrix, rows indexing target
/// coordinates) with respect to SPD metrics `g` (n x n) and `h` (m x m).
///
/// Ties and signs are fixed deterministically: within a group of equal
/// singular values the right-singular subspace is re-spanned by
/// Gram-Schmidt against the coordinate axes in index order, and each
/// `a_i` is flipped so its first non-negligible component is positive
/// (`a_{n+i}` follows so that `df(a_i) = λ_i a_{n+i}` keeps `λ_i >= 0`).
pub fn singular_frames(df: &DMatrix<f64>, g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<SingularData> {
    let n = g.nrows();
    let m = h.nrows();
    assert_eq!(df.nrows(), m, "df must be m x n");
    assert_eq!(df.ncols(), n, "df must be m x n");

    let lg = g
        .clone()
        .cholesky()
        .ok_or(Error::DegenerateMetric { min_eigenvalue: 0.0 })?;
    let lh = h
        .clone()
        .cholesky()
        .ok_or(Error::DegenerateMetric { min_eigenvalue: 0.0 })?;

    // Orthonormal-gauge matrix: v-hat = L^T v, so  df_hat = Lh^T df (Lg^T)^{-1}.
    let lg_t = lg.l().transpose();
    let lh_t = lh.l().transpose();
    let lg_t_inv = lg_t
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMetric { min_eigenvalue: 0.0 })?;
    let df_hat = &lh_t * df * &lg_t_inv;

    let svd = df_hat.clone().svd(true, true);
    let u_full = svd.u.as_ref().expect("svd with u");
    let vt_full = svd.v_t.as_ref().expect("svd with v_t");
    let k = svd.singular_values.len();

    // Assemble full orthonormal bases: complete U to m x m and V to n x n.
    let mut v = DMatrix::<f64>::zeros(n, n);
    for j in 0..k.min(n) {
        for i in 0..n {
            v[(i, j)] = vt_full[(j, i)];
        }
    }
    complete_orthonormal(&mut v, k.min(n));
    let mut u = DMatrix::<f64>::zeros(m, m);
    for j in 0..k.min(m) {
        for i in 0..m {
            u[(i, j)] = u_full[(i, j)];
        }
    }
    complete_orthonormal(&mut u, k.min(m));

    let mut lambdas = vec![0.0; n];
    for i in 0..k.min(n) {
        lambdas[i] = svd.singular_values[i];
    }

    // Sort descending, carrying columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap().then(a.cmp(&b)));
    let lambdas_sorted: Vec<f64> = order.iter().map(|&i| lambdas[i]).collect();
    let v = reorder_columns(&v, &order);
    let u = {
        // Target columns follow the first min(n, m) sorted slots; the rest keep
        // their original completion order.
        let mut target_order: Vec<usize> = Vec::with_capacity(m);
        for &i in order.iter().take(m.min(n)) {
            if i < m {
                target_order.push(i);
            }
        }
        for j in 0..m {
            if !target_order.contains(&j) {
                target_order.push(j);
            }
        }
        reorder_columns(&u, &target_order)
    };
    let mut lambdas = lambdas_sorted;

    let lambda_max = lambdas[0];
    let cutoff = if lambda_max > RANK_ABSOLUTE_CUTOFF {
        RANK_RELATIVE_CUTOFF * lambda_max
    } else {
        RANK_ABSOLUTE_CUTOFF
    };
    let rank = lambdas.iter().take_while(|l| **l > cutoff).count().min(m);
    for l in lambdas.iter_mut().skip(rank) {
        *l = 0.0;
    }

    let mut v = v;
    let mut u = u;

    // Deterministic gauge inside tie groups (including the null group).
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (lambdas[start] - lambdas[end]).abs() <= TIE_TOLERANCE * (1.0 + lambda_max) {
            end += 1;
        }
        if end - start > 1 {
            regauge_group(&mut v, start, end);
            if lambdas[start] > cutoff {
                // Left vectors must follow: u_i = df_hat v_i / λ_i.
                for j in start..end.min(rank) {
                    let col = (&df_hat * v.column(j)) / lambdas[j];
                    u.set_column(j, &col);
                }
            }
        }
        start = end;
    }
    // Null block of the target side (p > rank): re-gauge deterministically.
    if rank < m {
        regauge_group(&mut u, rank, m);
    }

    // Sign convention on the domain basis in chart coordinates.
    let mut domain_basis = &lg_t_inv * &v;
    let lh_t_inv = lh_t
        .try_inverse()
        .ok_or(Error::DegenerateMetric { min_eigenvalue: 0.0 })?;
    let mut target_basis = &lh_t_inv * &u;
    for i in 0..n {
        if sign_flip_needed(&domain_basis.column(i).iter().copied().collect::<Vec<_>>()) {
            for r in 0..n {
                domain_basis[(r, i)] = -domain_basis[(r, i)];
            }
            if i < rank {
                for r in 0..m {
                    target_basis[(r, i)] = -target_basis[(r, i)];
                }
            }
        }
    }
    for p in rank..m {
        if sign_flip_needed(&target_basis.column(p).iter().copied().collect::<Vec<_>>()) {
            for r in 0..m {
                target_basis[(r, p)] = -target_basis[(r, p)];
            }
        }
    }

    Ok(SingularData {
        lambdas,
        rank,
        domain_basis,
        target_basis,
    })
}

fn reorder_columns(mat: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(mat.nrows(), order.len());
    for (j, &src) in order.iter().enumerate() {
        out.set_column(j, &mat.column(src));
    }
    out
}

/// Re-span columns `[start, end)` of an orthonormal matrix by projecting the
/// coordinate axes onto the subspace and Gram-Schmidting in index order.
fn regauge_group(mat: &mut DMatrix<f64>, start: usize, end: usize) {
    let dim = mat.nrows();
    let cols: Vec<DVector<f64>> = (start..end).map(|j| mat.column(j).into_owned()).collect();
    let project = |w: &DVector<f64>| -> DVector<f64> {
        let mut p = DVector::zeros(dim);
        for c in &cols {
            p += c * c.dot(w);
        }
        p
    };
    let mut picked: Vec<DVector<f64>> = Vec::with_capacity(end - start);
    for axis in 0..dim {
        if picked.len() == end - start {
            break;
        }
        let mut e = DVector::zeros(dim);
        e[axis] = 1.0;
        let mut w = project(&e);
        for q in &picked {
            let d = q.dot(&w);
            w -= q * d;
        }
        let norm = w.norm();
        if norm > 1e-8 {
            picked.push(w / norm);
        }
    }
    // Fall back to the original columns if the axes were too degenerate.
    let mut idx = 0;
    while picked.len() < end - start && idx < cols.len() {
        let mut w = cols[idx].clone();
        for q in &picked {
            let d = q.dot(&w);
            w -= q * d;
        }
        let norm = w.norm();
        if norm > 1e-8 {
            picked.push(w / norm);
        }
        idx += 1;
    }
    for (j, w) in picked.iter().enumerate() {
        mat.set_column(start + j, w);
    }
}

fn complete_orthonormal(mat: &mut DMatrix<f64>, have: usize) {
    let dim = mat.nrows();
    let mut count = have;
    for axis in 0..dim {
        if count == dim {
            break;
        }
        let mut w = DVector::zeros(dim);
        w[axis] = 1.0;
        for j in 0..count {
            let c = mat.column(j);
            let d = c.dot(&w);
            w -= c * d;
        }
        let norm = w.norm();
        if norm > 1e-8 {
            mat.set_column(count, &(w / norm));
            count += 1;
        }
    }
    assert_eq!(count, dim, "could not complete orthonormal basis");
}

fn sign_flip_needed(col: &[f64]) -> bool {
    let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    for &c in col {
        if c.abs() > 1e-8 * norm.max(1e-300) {
            return c < 0.0;
        }
    }
    false
}

/// Build the adapted orthonormal frames of the graph from singular data.
pub fn adapted_frames(sd: &SingularData) -> AdaptedFrames {
    let n = sd.domain_basis.nrows();
    let m = sd.target_basis.nrows();
    let mut tangent = DMatrix::zeros(n + m, n);
    let mut normal = DMatrix::zeros(n + m, m);
    for i in 0..n {
        if i < sd.rank {
            let l = sd.lambdas[i];
            let s = 1.0 / (1.0 + l * l).sqrt();
            for r in 0..n {
                tangent[(r, i)] = s * sd.domain_basis[(r, i)];
            }
            for r in 0..m {
                tangent[(n + r, i)] = s * l * sd.target_basis[(r, i)];
            }
        } else {
            for r in 0..n {
                tangent[(r, i)] = sd.domain_basis[(r, i)];
            }
        }
    }
    for p in 0..m {
        if p < sd.rank {
            let l = sd.lambdas[p];
            let s = 1.0 / (1.0 + l * l).sqrt();
            for r in 0..n {
                normal[(r, p)] = -s * l * sd.domain_basis[(r, p)];
            }
            for r in 0..m {
                normal[(n + r, p)] = s * sd.target_basis[(r, p)];
            }
        } else {
            for r in 0..m {
                normal[(n + r, p)] = sd.target_basis[(r, p)];
            }
        }
    }
    AdaptedFrames { tangent, normal }
}

/// `(1 - λ²)/(1 + λ²)`: the diagonal of the restricted difference tensor.
#[inline]
pub fn s_diag_entry(lambda: f64) -> f64 {
    (1.0 - lambda * lambda) / (1.0 + lambda * lambda)
}

/// `-2λ/(1 + λ²)`: the tangent/normal coupling entry.
#[inline]
pub fn s_cross_entry(lambda: f64) -> f64 {
    -2.0 * lambda / (1.0 + lambda * lambda)
}

/// The difference tensor on the adapted frames.
///
/// Returns the restriction diagonal `S(e_i, e_i) = (1-λ_i²)/(1+λ_i²)` and
/// the full `(n+m) x (n+m)` block matrix
///
/// ```text
/// ( B  D )          B_ii = (1-λ_i²)/(1+λ_i²)
/// ( D -B )          D_ii = -2λ_i/(1+λ_i²)
/// ```
///
/// in the frame order `e_1..e_n, e_{n+1}..e_{n+m}` (λ padded by zero
/// outside its length).
pub fn s_restriction(sd: &SingularData) -> (Vec<f64>, DMatrix<f64>) {
    let n = sd.domain_basis.nrows();
    let m = sd.target_basis.nrows();
    let lam = |i: usize| if i < n { sd.lambdas[i] } else { 0.0 };
    let diag: Vec<f64> = (0..n).map(|i| s_diag_entry(lam(i))).collect();
    let mut full = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        full[(i, i)] = diag[i];
    }
    for p in 0..m {
        full[(n + p, n + p)] = -s_diag_entry(lam(p));
    }
    for i in 0..n.min(m) {
        let d = s_cross_entry(lam(i));
        full[(i, n + i)] = d;
        full[(n + i, i)] = d;
    }
    (diag, full)
}

/// The Jacobian of the projection of the graph onto the domain factor:
/// `1 / sqrt(Π (1 + λ_i²))`, always in `(0, 1]`.
pub fn star_omega(lambdas: &[f64]) -> f64 {
    let prod: f64 = lambdas.iter().map(|l| 1.0 + l * l).product();
    1.0 / prod.sqrt()
}

/// Minimum over index pairs of the sum of two eigenvalues of `S`:
///
/// ```text
/// min_{i<j} 2 (1 - λ_i² λ_j²) / ((1+λ_i²)(1+λ_j²))
/// ```
///
/// positive exactly when the map is area decreasing. Because the pair sum
/// is decreasing in both arguments the minimum is attained by the two
/// largest singular values.
pub fn area_margin(lambdas: &[f64]) -> Result<f64> {
    if lambdas.len() < 2 {
        return Err(Error::Arity {
            context: "area_margin",
            needed: 2,
            got: lambdas.len(),
        });
    }
    let mut l1 = f64::NEG_INFINITY;
    let mut l2 = f64::NEG_INFINITY;
    for &l in lambdas {
        if l > l1 {
            l2 = l1;
            l1 = l;
        } else if l > l2 {
            l2 = l;
        }
    }
    Ok(pair_sum(l1, l2))
}

/// `S_ii + S_jj` written as a single fraction.
#[inline]
pub fn pair_sum(li: f64, lj: f64) -> f64 {
    2.0 * (1.0 - li * li * lj * lj) / ((1.0 + li * li) * (1.0 + lj * lj))
}

/// Number of ordered pairs `a < b` in `0..n`.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Lexicographic index of the pair `(a, b)`, `a < b`, in `0..pair_count(n)`.
pub fn pair_index(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// All pairs `(a, b)` with `a < b < n` in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(n));
    for a in 0..n {
        for b in a + 1..n {
            out.push((a, b));
        }
    }
    out
}

/// The operator induced on the second exterior power by a symmetric `P`:
///
/// ```text
/// P2_{(ab)(cd)} = P_ac δ_bd + P_bd δ_ac - P_ad δ_bc - P_bc δ_ad
/// ```
///
/// over the ordered-pair basis `a < b`. Its eigenvalues are the pairwise
/// sums of the eigenvalues of `P`.
pub fn p2_matrix(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    assert_eq!(n, p.ncols());
    let prs = pairs(n);
    let dim = prs.len();
    let mut out = DMatrix::zeros(dim, dim);
    let delta = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
    for (row, &(a, b)) in prs.iter().enumerate() {
        for (col, &(c, d)) in prs.iter().enumerate() {
            out[(row, col)] = p[(a, c)] * delta(b, d) + p[(b, d)] * delta(a, c)
                - p[(a, d)] * delta(b, c)
                - p[(b, c)] * delta(a, d);
        }
    }
    out
}
