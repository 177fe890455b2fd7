//! The verification suite: randomized identity checks plus the grid
//! convergence battery, shared by the `verify` CLI command and the
//! acceptance tests.

use crate::error::Result;
use crate::frames;

use crate::identities;
use crate::scenario::{GridConfig, InitialMap, ScenarioConfig, SpaceSpec};
use crate::{curvature, flow};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct VerifyRow {
    pub name: &'static str,
    pub samples: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl VerifyRow {
    fn new(name: &'static str, samples: usize, max_violation: f64, tolerance: f64) -> Self {
        VerifyRow {
            name,
            samples,
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Randomized identity suite: equalities plus the inequality batteries.
pub fn identity_suite(samples: usize, seed: u64) -> Vec<VerifyRow> {
    let mut rows = core_identity_rows(samples, seed);
    rows.extend(inequality_rows(samples, seed));
    rows
}

/// The closed-form equalities (projection Jacobian, restriction blocks,
/// curvature simplification, pair sums, regrouping, exterior-square
/// spectrum). Each row reports the worst violation over `samples` draws.
pub fn core_identity_rows(samples: usize, seed: u64) -> Vec<VerifyRow> {
    let mut rows = Vec::new();

    // Jacobian of the domain projection vs the singular-value formula.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x01);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=5);
            let mut lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.5)).collect();
            for l in lam.iter_mut().skip(n.min(m)) {
                *l = 0.0;
            }
            lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let (_, fr, _) = identities::gauge_frames(&lam, m);
            let proj = DMatrix::from_fn(n, n, |i, j| fr.tangent[(i, j)]);
            worst = worst.max(rel(proj.determinant().abs(), frames::star_omega(&lam)));
        }
        rows.push(VerifyRow::new("jacobian_vs_singular_values", samples, worst, 1e-10));
    }

    // Restricted difference tensor: block form vs direct definition.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x02);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=4);
            let mut lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.5)).collect();
            for l in lam.iter_mut().skip(n.min(m)) {
                *l = 0.0;
            }
            lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let (_, fr, full) = identities::gauge_frames(&lam, m);
            for a in 0..n + m {
                for b in 0..n + m {
                    let va = if a < n { fr.tangent.column(a) } else { fr.normal.column(a - n) };
                    let vb = if b < n { fr.tangent.column(b) } else { fr.normal.column(b - n) };
                    let mut direct = 0.0;
                    for l in 0..n {
                        direct += va[l] * vb[l];
                    }
                    for l in n..n + m {
                        direct -= va[l] * vb[l];
                    }
                    worst = worst.max(rel(direct, full[(a, b)]));
                }
            }
        }
        rows.push(VerifyRow::new("difference_tensor_block_form", samples, worst, 1e-10));
    }

    // Curvature-term simplification identity.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x03);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(2..=6);
            let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let k1 = rng.gen_range(-2.0..2.0);
            let k2 = rng.gen_range(-2.0..2.0);
            let i = rng.gen_range(0..n);
            let (lhs, rhs) = identities::identity_411(&lam, k1, k2, n, i);
            worst = worst.max(rel(lhs, rhs));
        }
        rows.push(VerifyRow::new("curvature_simplification_identity", samples, worst, 1e-10));
    }

    // Pair-sum margin equals the sum of the two smallest diagonal entries.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x04);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(2..=6);
            let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.5)).collect();
            let mut diag: Vec<f64> = lam.iter().map(|l| frames::s_diag_entry(*l)).collect();
            diag.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let margin = frames::area_margin(&lam).unwrap();
            worst = worst.max(rel(diag[0] + diag[1], margin));
        }
        rows.push(VerifyRow::new("pair_sum_margin", samples, worst, 1e-10));
    }

    // Pairwise regrouping of the curvature sum.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(2..=6);
            let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let (lhs, rhs) = identities::identity_62(&lam);
            worst = worst.max(rel(lhs, rhs));
        }
        rows.push(VerifyRow::new("pair_regrouping_identity", samples, worst, 1e-10));
    }

    // Exterior-square spectrum is the pairwise sums of the base spectrum.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x06);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(2..=6);
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            let sym = (&a + a.transpose()) * 0.5;
            let mut base: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
            base.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut sums = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    sums.push(base[i] + base[j]);
                }
            }
            sums.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut got: Vec<f64> = frames::p2_matrix(&sym)
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .collect();
            got.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (g, s) in got.iter().zip(&sums) {
                worst = worst.max(rel(*g, *s));
            }
        }
        rows.push(VerifyRow::new("exterior_square_spectrum", samples, worst, 1e-10));
    }

    rows
}

/// The curvature-convention pin and the maximum-principle inequality
/// batteries.
pub fn inequality_rows(samples: usize, seed: u64) -> Vec<VerifyRow> {
    let mut rows = Vec::new();

    // The curvature contraction pin: closed form vs frame-level brute force.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x07);
        let count = (samples / 10).max(1000);
        let mut worst: f64 = 0.0;
        for _ in 0..count {
            let n = rng.gen_range(2..=5);
            let m = rng.gen_range(1..=5);
            let sample = identities::sample_unconstrained(&mut rng, n, m, 2.0);
            for i in 0..n {
                for j in 0..n {
                    let closed = identities::curvature_term_410(&sample, i, j);
                    let brute = identities::curvature_term_410_brute(&sample, i, j);
                    worst = worst.max(rel(closed, brute));
                }
            }
        }
        rows.push(VerifyRow::new("curvature_contraction_pin", count, worst, 1e-10));
    }

    // Null-eigenvector nonnegativity.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x08);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(2..=4);
            let m = rng.gen_range(1..=4);
            let s = identities::sample_lemma41(&mut rng, n, m);
            let v = identities::lemma41_form(&s).expect("constrained sample");
            worst = worst.max(-v);
        }
        rows.push(VerifyRow::new("null_eigenvector_nonnegativity", samples, worst, 1e-12));
    }

    // Critical-point lower bound.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x09);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(2..=4);
            let m = rng.gen_range(1..=4);
            let s = identities::sample_lemma53(&mut rng, n, m).expect("constrained sample");
            let v = identities::lemma53_rhs(&s).expect("constrained sample");
            worst = worst.max(2.0 * s.eta - v);
        }
        rows.push(VerifyRow::new("critical_point_lower_bound", samples, worst, 1e-12));
    }

    // Gradient-relation pair inequality.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a);
        let count = (samples / 10).max(1000);
        let mut worst: f64 = 0.0;
        let mut done = 0;
        while done < count {
            let n = rng.gen_range(2..=4);
            let m = rng.gen_range(2..=4);
            let s = identities::sample_lemma53(&mut rng, n, m).expect("constrained sample");
            if s.lambdas[1] * s.lambdas[1] >= s.lambdas[0] * s.lambdas[0] {
                continue;
            }
            for (lhs, rhs) in identities::sff_pair_inequality(&s).expect("constrained") {
                worst = worst.max(lhs - rhs);
            }
            done += 1;
        }
        rows.push(VerifyRow::new("gradient_pair_inequality", count, worst, 1e-12));
    }

    // Quadratic term lower bound for area-decreasing data.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let n = rng.gen_range(2..=4);
            let m = rng.gen_range(1..=4);
            let s = identities::sample_area_decreasing(&mut rng, n, m);
            worst = worst.max(-identities::quadratic_lower_bound(&s));
        }
        rows.push(VerifyRow::new("quadratic_term_lower_bound", samples, worst, 1e-12));
    }

    // Logarithmic comparison chain.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0c);
        let count = (samples / 10).max(500);
        let mut worst: f64 = 0.0;
        let mut done = 0;
        while done < count {
            let n = rng.gen_range(2..=3);
            let epsilon = rng.gen_range(0.1..0.9);
            let bound = ((1.0 - epsilon) / epsilon as f64).sqrt();
            let mut lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..bound)).collect();
            let mut pmax: f64 = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    pmax = pmax.max(lam[i] * lam[j]);
                }
            }
            let cap = (1.0 - epsilon).sqrt();
            if pmax > cap {
                let sc = (cap / pmax).sqrt() * 0.999;
                lam.iter_mut().for_each(|l| *l *= sc);
            }
            let k1: f64 = rng.gen_range(0.0..2.0);
            let k2 = rng.gen_range(-k1..=k1);
            if k1 + k2 <= 1e-6 {
                continue;
            }
            let (a, b, c) = identities::log_bound_64(&lam, epsilon, k1, k2).expect("constrained");
            worst = worst.max(b - a).max(c - b);
            done += 1;
        }
        rows.push(VerifyRow::new("log_comparison_chain", count, worst, 1e-10));
    }

    // Degree-two homogeneity of the quadratic forms in h.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0d);
        let count = (samples / 100).max(100);
        let mut worst: f64 = 0.0;
        for _ in 0..count {
            let s41 = identities::sample_lemma41(&mut rng, 3, 2);
            let base = identities::lemma41_form(&s41.with_h_scaled(0.0)).unwrap();
            let v1 = identities::lemma41_form(&s41).unwrap() - base;
            let v2 = identities::lemma41_form(&s41.with_h_scaled(2.0)).unwrap() - base;
            worst = worst.max(rel(v2, 4.0 * v1));
            let s53 = identities::sample_lemma53(&mut rng, 3, 2).unwrap();
            let base = identities::lemma53_rhs(&s53.with_h_scaled(0.0)).unwrap();
            let v1 = identities::lemma53_rhs(&s53).unwrap() - base;
            let v2 = identities::lemma53_rhs(&s53.with_h_scaled(2.0)).unwrap() - base;
            worst = worst.max(rel(v2, 4.0 * v1));
        }
        rows.push(VerifyRow::new("quadratic_homogeneity", count, worst, 1e-10));
    }

    rows
}

fn sphere_scenario(resolution: usize, rho: f64) -> ScenarioConfig {
    ScenarioConfig {
        domain: SpaceSpec::RoundSphere { radius: 1.0 },
        target: SpaceSpec::RoundSphere { radius: 1.0 },
        grid: GridConfig {
            resolution: vec![resolution, resolution],
        },
        initial_map: InitialMap::ContractedIdentity { rho },
        flow: serde_json::from_value(serde_json::json!({"t_end": 1.0})).unwrap(),
        output_dir: None,
        seed: 0,
        force: false,
        snapshot_every: 0,
    }
}

struct RefinementErrors {
    residual: f64,
    defect: f64,
    gradient: f64,
}

fn refinement_errors(resolution: usize) -> Result<RefinementErrors> {
    let config = sphere_scenario(resolution, 0.8);
    let state = crate::scenario::build_initial_map(&config)?;
    let dt = 1e-7;
    let next = flow::step(&state, dt, flow::Scheme::Rk4)?;
    let res = curvature::residual_34(&state, &next, dt)?;
    let residual = res.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    let mut stepper = flow::Stepper::new(&state)?;
    stepper.sweep(&state)?;
    let rhs = stepper.rhs().to_vec();
    let m = state.m();
    let mut defect: f64 = 0.0;
    for node in 0..state.node_count() {
        let d = curvature::normal_defect_from_rhs(&state, node, &rhs[node * m..(node + 1) * m])?;
        defect = defect.max(d);
    }

    let w = curvature::log_star_omega_field(&state)?;
    let mut gradient: f64 = 0.0;
    for node in 0..state.node_count() {
        let (fd, formula) = curvature::grad_log_omega_check(&state, node, &w)?;
        for (a, b) in fd.iter().zip(&formula) {
            gradient = gradient.max((a - b).abs());
        }
    }
    Ok(RefinementErrors {
        residual,
        defect,
        gradient,
    })
}

/// Grid-convergence battery: halving the spacing must shrink the evolution
/// residual, the normal defect and the gradient-identity discrepancy by a
/// factor consistent with second order.
pub fn convergence_suite() -> Result<Vec<VerifyRow>> {
    let coarse = refinement_errors(24)?;
    let fine = refinement_errors(48)?;
    let band = |ratio: f64| -> f64 {
        if ratio < 3.2 {
            3.2 - ratio
        } else if ratio > 4.8 {
            ratio - 4.8
        } else {
            0.0
        }
    };
    let mut rows = Vec::new();
    let r = coarse.residual / fine.residual;
    rows.push(VerifyRow::new("evolution_residual_order", 2, band(r), 0.0));
    let r = coarse.defect / fine.defect;
    rows.push(VerifyRow::new("normal_defect_order", 2, band(r), 0.0));
    let r = coarse.gradient / fine.gradient;
    rows.push(VerifyRow::new("gradient_identity_order", 2, band(r), 0.0));
    Ok(rows)
}

/// Full verification pass; returns the table and the overall verdict.
pub fn run_verify(samples: usize, seed: u64) -> Result<(Vec<VerifyRow>, bool)> {
    let mut rows = identity_suite(samples, seed);
    rows.extend(convergence_suite()?);
    let ok = rows.iter().all(|r| r.pass);
    Ok((rows, ok))
}

pub fn format_table(rows: &[VerifyRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<34} {:>8} {:>14} {:>10} {:>6}\n",
        "identity", "samples", "max violation", "tolerance", "pass"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<34} {:>8} {:>14.3e} {:>10.1e} {:>6}\n",
            r.name,
            r.samples,
            r.max_violation,
            r.tolerance,
            if r.pass { "ok" } else { "FAIL" }
        ));
    }
    out
}
