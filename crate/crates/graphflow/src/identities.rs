//! Randomized algebraic verifiers for the closed-form identities and
//! maximum-principle inequalities behind the flow's preserved quantities.
//!
//! Every closed form is checked against an independent brute-force
//! construction in an orthonormal product gauge: the singular bases are the
//! coordinate axes, frames come from the usual formulas, the ambient
//! curvature is the constant-curvature bracket per factor, and the
//! difference tensor is evaluated from its definition. The curvature
//! contraction check is the arbiter of the global sign convention.

use crate::curvature::{norm_a_squared, quadratic_terms_34, Sff};
use crate::error::{Error, Result};
use crate::frames::{self, adapted_frames, s_restriction, AdaptedFrames, SingularData};
use crate::spaceform::product_riemann;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A point of the finite-dimensional algebra all verifiers operate on.
#[derive(Debug, Clone)]
pub struct AlgebraSample {
    pub n: usize,
    pub m: usize,
    /// Singular values, sorted descending, zero past `min(n, m)`.
    pub lambdas: Vec<f64>,
    /// Second-fundamental-form components `h[(p*n + i)*n + j]`, symmetric
    /// in `(i, j)`, normal index `p < m`.
    pub h: Vec<f64>,
    pub k1: f64,
    pub k2: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub delta: f64,
}

impl AlgebraSample {
    pub fn sff(&self) -> Sff {
        Sff::from_components(self.n, self.m, self.h.clone())
    }

    #[inline]
    pub fn h_at(&self, p: usize, i: usize, j: usize) -> f64 {
        if p >= self.m {
            0.0
        } else {
            self.h[(p * self.n + i) * self.n + j]
        }
    }

    /// Scale the second-fundamental-form part (homogeneity checks).
    pub fn with_h_scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.h {
            *v *= s;
        }
        out
    }
}

/// Frames and difference-tensor blocks in the orthonormal gauge where the
/// singular bases are the coordinate axes.
pub fn gauge_frames(lambdas: &[f64], m: usize) -> (SingularData, AdaptedFrames, DMatrix<f64>) {
    let n = lambdas.len();
    let rank = lambdas
        .iter()
        .take_while(|l| **l > 0.0)
        .count()
        .min(m);
    let sd = SingularData {
        lambdas: lambdas.to_vec(),
        rank,
        domain_basis: DMatrix::identity(n, n),
        target_basis: DMatrix::identity(m, m),
    };
    let fr = adapted_frames(&sd);
    let (_, full) = s_restriction(&sd);
    (sd, fr, full)
}

/// Closed form of the ambient curvature contraction `Σ_{k,α} R_{kikα} S_{αj}`:
///
/// ```text
/// λ_i²/(1+λ_i²)² [ (k₁-k₂)(n-1) + (k₁+k₂) Σ_{k≠i} (1-λ_k²)/(1+λ_k²) ] δ_ij
/// ```
pub fn curvature_term_410(sample: &AlgebraSample, i: usize, j: usize) -> f64 {
    if i != j {
        return 0.0;
    }
    let n = sample.n;
    let li2 = sample.lambdas[i] * sample.lambdas[i];
    let mut inner = 0.0;
    for k in 0..n {
        if k != i {
            inner += frames::s_diag_entry(sample.lambdas[k]);
        }
    }
    li2 / ((1.0 + li2) * (1.0 + li2))
        * ((sample.k1 - sample.k2) * (n as f64 - 1.0) + (sample.k1 + sample.k2) * inner)
}

/// Brute-force route to the same contraction: adapted frames, the
/// constant-curvature bracket of the product, and the difference tensor
/// evaluated from its definition.
pub fn curvature_term_410_brute(sample: &AlgebraSample, i: usize, j: usize) -> f64 {
    let n = sample.n;
    let m = sample.m;
    let (_, fr, _) = gauge_frames(&sample.lambdas, m);
    let col = |mat: &DMatrix<f64>, c: usize| -> Vec<f64> { mat.column(c).iter().copied().collect() };
    let e_i = col(&fr.tangent, i);
    let e_j = col(&fr.tangent, j);
    let mut total = 0.0;
    for k in 0..n {
        let e_k = col(&fr.tangent, k);
        for p in 0..m {
            let e_np = col(&fr.normal, p);
            let r = product_riemann(sample.k1, sample.k2, n, &e_k, &e_i, &e_k, &e_np);
            // S(e_{n+p}, e_j) straight from the definition.
            let mut s = 0.0;
            for l in 0..n {
                s += e_np[l] * e_j[l];
            }
            for l in n..n + m {
                s -= e_np[l] * e_j[l];
            }
            total += r * s;
        }
    }
    total
}

/// Both sides of the curvature-term simplification identity: for each `i`,
///
/// ```text
/// (k₁+k₂) Σ_{k≠i} 1/(1+λ_k²) + k₂(1-n)
///   = (k₁-k₂)(n-1)/2 + (k₁+k₂) Σ_{k≠i} (1-λ_k²)/(2(1+λ_k²))
/// ```
pub fn identity_411(lambdas: &[f64], k1: f64, k2: f64, n: usize, i: usize) -> (f64, f64) {
    let mut sum_inv = 0.0;
    let mut sum_sd = 0.0;
    for k in 0..n {
        if k != i {
            sum_inv += 1.0 / (1.0 + lambdas[k] * lambdas[k]);
            sum_sd += frames::s_diag_entry(lambdas[k]) / 2.0;
        }
    }
    let lhs = (k1 + k2) * sum_inv + k2 * (1.0 - n as f64);
    let rhs = (k1 - k2) * (n as f64 - 1.0) / 2.0 + (k1 + k2) * sum_sd;
    (lhs, rhs)
}

/// The null-eigenvector form of the distance-decreasing maximum principle:
///
/// ```text
/// 2ε h_{αk1}h_{αk1} + 2 R_{k1kα}S_{α1} - 2 h_{αk1}h_{βk1}S_{αβ}
/// ```
///
/// evaluated with `V = e₁` realizing `S₁₁ = ε`; nonnegative whenever the
/// remaining singular values stay at or below `λ₁` and `k₁ >= |k₂|`.
pub fn lemma41_form(sample: &AlgebraSample) -> Result<f64> {
    let n = sample.n;
    let m = sample.m;
    if !(sample.epsilon >= 0.0 && sample.epsilon < 1.0) {
        return Err(Error::Constraint(format!(
            "epsilon {} outside [0, 1)",
            sample.epsilon
        )));
    }
    let expected_l1 = ((1.0 - sample.epsilon) / (1.0 + sample.epsilon)).sqrt();
    if (sample.lambdas[0] - expected_l1).abs() > 1e-9 {
        return Err(Error::Constraint(
            "λ₁ does not realize the null eigenvector premise S₁₁ = ε".into(),
        ));
    }
    let (_, _, s_full) = gauge_frames(&sample.lambdas, m);
    let mut quad_eps = 0.0;
    for p in 0..m {
        for k in 0..n {
            let v = sample.h_at(p, k, 0);
            quad_eps += v * v;
        }
    }
    let curv = curvature_term_410(sample, 0, 0);
    let mut cross = 0.0;
    for p in 0..m {
        for q in 0..m {
            for k in 0..n {
                cross += sample.h_at(p, k, 0) * sample.h_at(q, k, 0) * s_full[(n + p, n + q)];
            }
        }
    }
    Ok(2.0 * sample.epsilon * quad_eps + 2.0 * curv - 2.0 * cross)
}

/// Impose the critical-point gradient relation on the sample by projection:
/// `h_{n+1,p1} := -(λ₂(1+λ₁²))/(λ₁(1+λ₂²)) h_{n+2,p2}` (both symmetric
/// slots), or zero both when `λ₁ = 0`.
pub fn impose_gradient_relation(sample: &mut AlgebraSample) -> Result<()> {
    let n = sample.n;
    if n < 2 {
        return Err(Error::Arity {
            context: "gradient relation",
            needed: 2,
            got: n,
        });
    }
    let l1 = sample.lambdas[0];
    let l2 = sample.lambdas[1];
    if l1 < l2 {
        return Err(Error::Constraint("singular values not sorted".into()));
    }
    let coeff = if l1 > 0.0 {
        -(l2 * (1.0 + l1 * l1)) / (l1 * (1.0 + l2 * l2))
    } else {
        0.0
    };
    for p in 0..n {
        let rhs = if sample.m >= 2 { sample.h_at(1, p, 1) } else { 0.0 };
        let v = coeff * rhs;
        if sample.m >= 1 {
            sample.h[(0 * n + p) * n + 0] = v;
            sample.h[(0 * n + 0) * n + p] = v;
        }
    }
    Ok(())
}

/// Right side of the critical-point inequality of the area-decreasing
/// maximum principle; bounded below by `2η` under the sampling constraints.
pub fn lemma53_rhs(sample: &AlgebraSample) -> Result<f64> {
    let n = sample.n;
    let m = sample.m;
    if n < 2 {
        return Err(Error::Arity {
            context: "lemma53_rhs",
            needed: 2,
            got: n,
        });
    }
    if sample.lambdas[0] * sample.lambdas[1] >= 1.0 {
        return Err(Error::Constraint("λ₁λ₂ >= 1: no positive margin".into()));
    }
    let (_, _, s_full) = gauge_frames(&sample.lambdas, m);
    let curv = curvature_term_410(sample, 0, 0) + curvature_term_410(sample, 1, 1);
    // 2 h_{αkj} h_{αkv} S_{jv} summed for v = 1, 2 (frame indices 0, 1).
    let mut tangential = 0.0;
    for v in 0..2 {
        for p in 0..m {
            for k in 0..n {
                for j in 0..n {
                    tangential += sample.h_at(p, k, j) * sample.h_at(p, k, v) * s_full[(j, v)];
                }
            }
        }
    }
    // -2 h_{αkv} h_{βkv} S_{αβ} summed for v = 1, 2.
    let mut normal = 0.0;
    for v in 0..2 {
        for p in 0..m {
            for q in 0..m {
                for k in 0..n {
                    normal += sample.h_at(p, k, v) * sample.h_at(q, k, v) * s_full[(n + p, n + q)];
                }
            }
        }
    }
    Ok(2.0 * sample.eta + 2.0 * curv + 2.0 * tangential - 2.0 * normal)
}

/// The squared gradient-relation pair `(h²_{n+1,p1}, h²_{n+2,p2})` per `p`;
/// the first is bounded by the second when `λ₂² < λ₁²` and `λ₁²λ₂² < 1`.
pub fn sff_pair_inequality(sample: &AlgebraSample) -> Result<Vec<(f64, f64)>> {
    let n = sample.n;
    if n < 2 {
        return Err(Error::Arity {
            context: "sff_pair_inequality",
            needed: 2,
            got: n,
        });
    }
    let (l1, l2) = (sample.lambdas[0], sample.lambdas[1]);
    if !(l2 * l2 < l1 * l1) || !(l1 * l1 * l2 * l2 < 1.0) {
        return Err(Error::Constraint(
            "needs λ₂² < λ₁² and λ₁²λ₂² < 1".into(),
        ));
    }
    Ok((0..n)
        .map(|p| {
            let a = sample.h_at(0, p, 0);
            let b = sample.h_at(1, p, 1);
            (a * a, b * b)
        })
        .collect())
}

/// Quadratic terms of the log-Jacobian evolution minus `δ |A|²`;
/// nonnegative when all pairwise products `λ_iλ_j` stay at or below `1-δ`.
pub fn quadratic_lower_bound(sample: &AlgebraSample) -> f64 {
    let sff = sample.sff();
    let q = quadratic_terms_34(&sff, &sample.lambdas);
    q - sample.delta * norm_a_squared(&sff)
}

/// Both routes of the pairwise regrouping of the curvature sum:
///
/// ```text
/// Σ_i λ_i²/(1+λ_i²) Σ_{j≠i} (1-λ_j²)/(2(1+λ_j²))
///   = Σ_{i<j} (λ_i² + λ_j² - 2λ_i²λ_j²) / (2(1+λ_i²)(1+λ_j²))
/// ```
pub fn identity_62(lambdas: &[f64]) -> (f64, f64) {
    let n = lambdas.len();
    let mut lhs = 0.0;
    for i in 0..n {
        let li2 = lambdas[i] * lambdas[i];
        let mut inner = 0.0;
        for j in 0..n {
            if j != i {
                inner += frames::s_diag_entry(lambdas[j]) / 2.0;
            }
        }
        lhs += li2 / (1.0 + li2) * inner;
    }
    let mut rhs = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (lambdas[i] * lambdas[i], lambdas[j] * lambdas[j]);
            rhs += (a + b - 2.0 * a * b) / (2.0 * (1.0 + a) * (1.0 + b));
        }
    }
    (lhs, rhs)
}

/// Coefficient for the logarithmic comparison bound: a positive constant
/// `c₁(ε, k₁, k₂, n)` with
///
/// ```text
/// (k₁+k₂) Σ_{i<j} (λ_i²+λ_j²-2λ_i²λ_j²)/(2(1+λ_i²)(1+λ_j²)) >= c₁ Σ λ_i²
/// ```
///
/// over the admissible region `λ_i² <= (1-ε)/ε`, `λ_iλ_j <= sqrt(1-ε)`.
///
/// Each pair term dominates `c₂ (λ_i² + λ_j²)` where `c₂` is the infimum
/// of the pairwise ratio over the two-dimensional admissible region, so
/// `c₁ = (k₁+k₂)(n-1) c₂` is a valid constant (exact for `n = 2`). The
/// pairwise infimum is found by dense minimization over the compact
/// `(t, s) = (λ_i², λ_j²)` region including its curved constraint
/// boundary, then refined locally; a 2% safety factor absorbs the
/// remaining grid error.
pub fn c1_constant(epsilon: f64, k1: f64, k2: f64, n: usize) -> Result<f64> {
    if !(k1 + k2 > 0.0) {
        return Err(Error::Constraint("needs k1 + k2 > 0".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Constraint("epsilon outside (0, 1)".into()));
    }
    if n < 2 {
        return Err(Error::Arity { context: "c1_constant", needed: 2, got: n });
    }
    let t_max = (1.0 - epsilon) / epsilon;
    let pair_max = 1.0 - epsilon;
    // Pairwise ratio ((t + s - 2ts)/(2(1+t)(1+s))) / (t + s), with the
    // removable limit 1/2 at the origin.
    let ratio = |t: f64, s: f64| -> f64 {
        let sum = t + s;
        if sum <= 0.0 {
            return 0.5;
        }
        (sum - 2.0 * t * s) / (2.0 * (1.0 + t) * (1.0 + s) * sum)
    };
    let k = 240usize;
    let mut best = 0.5f64;
    let mut best_at = (0.0, 0.0);
    for i in 0..=k {
        let t = t_max * i as f64 / k as f64;
        // Interior rows up to the pairwise constraint, plus the exact
        // constraint boundary point s = pair_max / t.
        let s_cap = if t > 0.0 { (pair_max / t).min(t_max) } else { t_max };
        for j in 0..=k {
            let s = s_cap * j as f64 / k as f64;
            let v = ratio(t, s);
            if v < best {
                best = v;
                best_at = (t, s);
            }
        }
    }
    // Local refinement around the best grid point.
    let mut span = t_max / k as f64;
    for _ in 0..24 {
        let (t0, s0) = best_at;
        for di in -4i64..=4 {
            for dj in -4i64..=4 {
                let t = (t0 + di as f64 * span / 4.0).clamp(0.0, t_max);
                let mut s = (s0 + dj as f64 * span / 4.0).clamp(0.0, t_max);
                if t > 0.0 {
                    s = s.min(pair_max / t);
                }
                let v = ratio(t, s);
                if v < best {
                    best = v;
                    best_at = (t, s);
                }
            }
        }
        span *= 0.5;
    }
    Ok(0.98 * (k1 + k2) * (n as f64 - 1.0) * best)
}

/// The three-link comparison chain
/// `(k₁+k₂)·pair-sum >= c₁ Σλ² >= c₁ ln Π(1+λ²)`.
pub fn log_bound_64(lambdas: &[f64], epsilon: f64, k1: f64, k2: f64) -> Result<(f64, f64, f64)> {
    let n = lambdas.len();
    if !(k1 + k2 > 0.0) {
        return Err(Error::Constraint("needs k1 + k2 > 0".into()));
    }
    let sq_bound = (1.0 - epsilon) / epsilon;
    for (i, l) in lambdas.iter().enumerate() {
        if l * l > sq_bound + 1e-9 {
            return Err(Error::Constraint(format!("λ_{i}² exceeds (1-ε)/ε")));
        }
        for lj in &lambdas[i + 1..] {
            if l * lj > (1.0 - epsilon).sqrt() + 1e-9 {
                return Err(Error::Constraint("pairwise product exceeds sqrt(1-ε)".into()));
            }
        }
    }
    let c1 = c1_constant(epsilon, k1, k2, n)?;
    let (_, pair) = identity_62(lambdas);
    let first = (k1 + k2) * pair;
    let sum_sq: f64 = lambdas.iter().map(|l| l * l).sum();
    let log_prod: f64 = lambdas.iter().map(|l| (1.0 + l * l).ln()).sum();
    Ok((first, c1 * sum_sq, c1 * log_prod))
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

fn normal_h(rng: &mut impl Rng, n: usize, m: usize) -> Vec<f64> {
    let mut h = vec![0.0; m * n * n];
    for p in 0..m {
        for i in 0..n {
            for j in i..n {
                let v: f64 = StandardNormal.sample(rng);
                h[(p * n + i) * n + j] = v;
                h[(p * n + j) * n + i] = v;
            }
        }
    }
    h
}

fn zero_past_rank(lambdas: &mut [f64], m: usize) {
    let n = lambdas.len();
    for l in lambdas.iter_mut().skip(n.min(m)).take(n) {
        *l = 0.0;
    }
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
}

/// Unconstrained sample with `k₁, k₂` in the given symmetric range.
pub fn sample_unconstrained(rng: &mut impl Rng, n: usize, m: usize, k_range: f64) -> AlgebraSample {
    let mut lambdas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
    zero_past_rank(&mut lambdas, m);
    AlgebraSample {
        n,
        m,
        lambdas,
        h: normal_h(rng, n, m),
        k1: rng.gen_range(-k_range..k_range),
        k2: rng.gen_range(-k_range..k_range),
        epsilon: 0.0,
        eta: 0.0,
        delta: 0.0,
    }
}

/// Sample realizing the null-eigenvector premise: `S₁₁ = ε` exactly via
/// `λ₁ = sqrt((1-ε)/(1+ε))`, all other singular values at or below `λ₁`,
/// and `k₁ >= |k₂|`.
pub fn sample_lemma41(rng: &mut impl Rng, n: usize, m: usize) -> AlgebraSample {
    let epsilon: f64 = rng.gen_range(0.0..0.95);
    let l1 = ((1.0 - epsilon) / (1.0 + epsilon)).sqrt();
    let mut lambdas = vec![0.0; n];
    lambdas[0] = l1;
    for l in lambdas.iter_mut().skip(1) {
        *l = rng.gen_range(0.0..l1);
    }
    // Keep λ₁ in slot 0; the rest sort descending and zero past the rank.
    let head = lambdas[0];
    let mut tail: Vec<f64> = lambdas[1..].to_vec();
    for (i, l) in tail.iter_mut().enumerate() {
        if i + 1 >= m {
            *l = 0.0;
        }
    }
    tail.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut lambdas = vec![head];
    lambdas.extend(tail);
    let k1 = rng.gen_range(0.0..2.0);
    let k2 = rng.gen_range(-k1..=k1);
    AlgebraSample {
        n,
        m,
        lambdas,
        h: normal_h(rng, n, m),
        k1,
        k2,
        epsilon,
        eta: 0.0,
        delta: 0.0,
    }
}

/// Sample for the critical-point inequality: squared-sorted singular
/// values with `λ₁λ₂ < 1`, everything from the third strictly below one,
/// the gradient relation imposed by projection, `k₁ >= |k₂|`.
pub fn sample_lemma53(rng: &mut impl Rng, n: usize, m: usize) -> Result<AlgebraSample> {
    let l1: f64 = rng.gen_range(0.0..2.0);
    let cap2 = if l1 > 0.0 { (0.999 / l1).min(l1) } else { 0.0 };
    let l2 = rng.gen_range(0.0..=cap2);
    let mut lambdas = vec![l1, l2];
    for _ in 2..n {
        lambdas.push(rng.gen_range(0.0..l2.min(0.999)));
    }
    zero_past_rank(&mut lambdas[1..], m.saturating_sub(1));
    // Keep λ₁ the largest; resorting the tail keeps squared ordering.
    let k1 = rng.gen_range(0.0..2.0);
    let k2 = rng.gen_range(-k1..=k1);
    let mut sample = AlgebraSample {
        n,
        m,
        lambdas,
        h: normal_h(rng, n, m),
        k1,
        k2,
        epsilon: 0.0,
        eta: rng.gen_range(0.0..0.5),
        delta: 0.0,
    };
    sample.epsilon = frames::pair_sum(sample.lambdas[0], sample.lambdas[1]) / 2.0;
    impose_gradient_relation(&mut sample)?;
    Ok(sample)
}

/// Sample with all pairwise products `λ_iλ_j <= 1-δ`, `1-δ = sqrt(1-ε)`.
pub fn sample_area_decreasing(rng: &mut impl Rng, n: usize, m: usize) -> AlgebraSample {
    let epsilon: f64 = rng.gen_range(0.02..0.98);
    let delta = 1.0 - (1.0 - epsilon).sqrt();
    let bound = 1.0 - delta;
    let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let mut max_pair: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            max_pair = max_pair.max(u[i] * u[j]);
        }
    }
    if max_pair > 0.0 {
        let v = rng.gen_range(0.3..=1.0);
        let scale = (bound * v / max_pair).sqrt();
        for x in &mut u {
            *x *= scale;
        }
    }
    zero_past_rank(&mut u, m);
    AlgebraSample {
        n,
        m,
        lambdas: u,
        h: normal_h(rng, n, m),
        k1: 0.0,
        k2: 0.0,
        epsilon,
        eta: 0.0,
        delta,
    }
}
