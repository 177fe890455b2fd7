//! Scenario configuration, initial-map presets and hypothesis checks.
//!
//! Configurations are JSON. A scenario names the two space forms, the grid,
//! an initial-map preset and the flow controls. Loading validates the
//! schema, building the initial map computes the convergence-hypothesis
//! flags (curvature inequalities, dimension, strict area-decreasing margin)
//! which the runner logs and persists.

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::frames;
use crate::grid::{self, GridSpec, MapState};
use crate::spaceform::SpaceForm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    FlatTorus { periods: Vec<f64> },
    RoundSphere { radius: f64 },
}

impl SpaceSpec {
    pub fn build(&self) -> Result<SpaceForm> {
        match self {
            SpaceSpec::FlatTorus { periods } => SpaceForm::flat_torus(periods.clone()),
            SpaceSpec::RoundSphere { radius } => SpaceForm::round_sphere(*radius),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialMap {
    /// The constant map to a fixed target chart point.
    Constant { point: Vec<f64> },
    /// A linear map between flat tori, `f = A x`; the matrix must send the
    /// domain period lattice into the target one.
    Linear { matrix: Vec<Vec<f64>> },
    /// Sphere-to-sphere contraction toward a fixed point: colatitude
    /// profile `θ ↦ ρ sin θ` around the fixed pole (the smooth map that
    /// agrees with geodesic contraction of ratio ρ at the pole and folds
    /// back at the antipode), then recentered so the image sits on the
    /// target equator. Both singular values equal ρ at the fixed pole.
    ContractedIdentity { rho: f64 },
    /// Rotationally symmetric sphere map `(θ, φ) ↦ (amplitude sin^m θ, mφ)`.
    Equivariant { m: usize, amplitude: f64 },
    /// Single Fourier mode on flat tori: `f¹ = amplitude sin(2π x¹ / P₁)`.
    Sinusoid { amplitude: f64 },
    /// Any preset plus a smooth random perturbation.
    Perturbed {
        base: Box<InitialMap>,
        amplitude: f64,
        seed: u64,
    },
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub domain: SpaceSpec,
    pub target: SpaceSpec,
    pub grid: GridConfig,
    pub initial_map: InitialMap,
    pub flow: FlowConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Permit borderline (zero-margin) initial data.
    #[serde(default)]
    pub force: bool,
    /// Write a state snapshot every this many steps (0: final only).
    #[serde(default)]
    pub snapshot_every: usize,
}

/// Convergence-hypothesis flags, computed at load time and logged.
#[derive(Debug, Clone, Serialize)]
pub struct Hypotheses {
    pub k1: f64,
    pub k2: f64,
    pub n: usize,
    pub m: usize,
    pub k1_ge_abs_k2: bool,
    pub k1_plus_k2_positive: bool,
    pub dim_at_least_2: bool,
    pub initial_max_lambda: f64,
    pub initial_area_margin: Option<f64>,
    pub area_decreasing: Option<bool>,
}

/// Parse and schema-validate a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    let config: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| Error::config("config", format!("{e}")))?;
    config.flow.validate()?;
    config.domain.build()?;
    config.target.build()?;
    Ok(config)
}

/// Build the initial state for a scenario.
pub fn build_initial_map(config: &ScenarioConfig) -> Result<MapState> {
    let domain = config.domain.build()?;
    let target = config.target.build()?;
    let grid = GridSpec::for_space(&domain, &config.grid.resolution)?;
    let values = preset_values(&config.initial_map, &domain, &target, &grid)?;
    let mut state = MapState {
        domain,
        target,
        grid,
        values,
        time: 0.0,
    };
    // Sphere-target presets whose raw chart hugs a pole get recentered
    // immediately; the map itself is unchanged.
    if let Some(d) = grid::image_pole_distance(&state) {
        if d < crate::flow::RECENTER_MARGIN {
            if let Some(rec) = grid::recenter_target_chart(&state) {
                state = rec;
            }
        }
    }
    if let Some(d) = grid::image_pole_distance(&state) {
        if d <= crate::spaceform::POLE_TOLERANCE {
            return Err(Error::config(
                "initial_map",
                "initial image hits the target chart pole set even after recentering",
            ));
        }
    }
    if !state.all_finite() {
        return Err(Error::config("initial_map", "non-finite initial values"));
    }
    Ok(state)
}

fn preset_values(
    preset: &InitialMap,
    domain: &SpaceForm,
    target: &SpaceForm,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let n = domain.dim();
    let m = target.dim();
    let nodes = grid.node_count();
    match preset {
        InitialMap::Constant { point } => {
            if point.len() != m {
                return Err(Error::config(
                    "initial_map.point",
                    format!("expected {m} coordinates, got {}", point.len()),
                ));
            }
            target.validate_point(point)?;
            let mut values = Vec::with_capacity(nodes * m);
            for _ in 0..nodes {
                values.extend_from_slice(point);
            }
            Ok(values)
        }
        InitialMap::Linear { matrix } => {
            let (dp, tp) = match (domain.chart(), target.chart()) {
                (
                    crate::spaceform::Chart::FlatTorus { periods: dp },
                    crate::spaceform::Chart::FlatTorus { periods: tp },
                ) => (dp.clone(), tp.clone()),
                _ => {
                    return Err(Error::config(
                        "initial_map",
                        "linear preset needs flat tori on both sides",
                    ))
                }
            };
            if matrix.len() != m || matrix.iter().any(|row| row.len() != n) {
                return Err(Error::config(
                    "initial_map.matrix",
                    format!("expected {m} x {n} matrix"),
                ));
            }
            // Lattice compatibility: each domain period must map to an
            // integer combination of target periods.
            for (a, row) in matrix.iter().enumerate() {
                for (i, entry) in row.iter().enumerate() {
                    let ratio = entry * dp[i] / tp[a];
                    if (ratio - ratio.round()).abs() > 1e-9 {
                        return Err(Error::config(
                            "initial_map.matrix",
                            format!(
                                "entry ({a},{i}) = {entry} does not map the period lattice into the target lattice"
                            ),
                        ));
                    }
                }
            }
            let mut values = vec![0.0; nodes * m];
            for node in 0..nodes {
                let x = grid.point_of(node);
                for a in 0..m {
                    values[node * m + a] = matrix[a].iter().zip(&x).map(|(c, xi)| c * xi).sum();
                }
            }
            Ok(values)
        }
        InitialMap::ContractedIdentity { rho } => {
            require_sphere_pair(domain, target, "contracted_identity")?;
            if !(*rho > 0.0 && *rho < 1.0) {
                return Err(Error::config(
                    "initial_map.rho",
                    format!("contraction ratio {rho} outside (0, 1)"),
                ));
            }
            let mut values = vec![0.0; nodes * m];
            for node in 0..nodes {
                let x = grid.point_of(node);
                values[node * m] = rho * x[0].sin();
                values[node * m + 1] = x[1];
            }
            Ok(values)
        }
        InitialMap::Equivariant { m: winding, amplitude } => {
            require_sphere_pair(domain, target, "equivariant")?;
            if *winding == 0 {
                return Err(Error::config("initial_map.m", "winding must be >= 1"));
            }
            if !(*amplitude > 0.0 && *amplitude < PI / 2.0) {
                return Err(Error::config(
                    "initial_map.amplitude",
                    format!("amplitude {amplitude} outside (0, π/2)"),
                ));
            }
            let mut values = vec![0.0; nodes * m];
            for node in 0..nodes {
                let x = grid.point_of(node);
                values[node * m] = amplitude * x[0].sin().powi(*winding as i32);
                values[node * m + 1] = *winding as f64 * x[1];
            }
            Ok(values)
        }
        InitialMap::Sinusoid { amplitude } => {
            let dp = match domain.chart() {
                crate::spaceform::Chart::FlatTorus { periods } => periods.clone(),
                _ => {
                    return Err(Error::config(
                        "initial_map",
                        "sinusoid preset needs a flat torus domain",
                    ))
                }
            };
            if !matches!(target.chart(), crate::spaceform::Chart::FlatTorus { .. }) {
                return Err(Error::config(
                    "initial_map",
                    "sinusoid preset needs a flat torus target",
                ));
            }
            let mut values = vec![0.0; nodes * m];
            for node in 0..nodes {
                let x = grid.point_of(node);
                values[node * m] = amplitude * (2.0 * PI * x[0] / dp[0]).sin();
            }
            Ok(values)
        }
        InitialMap::Perturbed { base, amplitude, seed } => {
            let mut values = preset_values(base, domain, target, grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let modes = 4;
            for alpha in 0..m {
                match domain.chart() {
                    crate::spaceform::Chart::FlatTorus { periods } => {
                        // Smooth periodic perturbation: a few random Fourier modes.
                        let coeffs: Vec<(Vec<i32>, f64, f64)> = (0..modes)
                            .map(|_| {
                                let k: Vec<i32> =
                                    (0..n).map(|_| rng.gen_range(-2..=2)).collect();
                                (k, rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0 * PI))
                            })
                            .collect();
                        for node in 0..nodes {
                            let x = grid.point_of(node);
                            let mut p = 0.0;
                            for (k, c, phase) in &coeffs {
                                let arg: f64 = k
                                    .iter()
                                    .zip(&x)
                                    .zip(periods)
                                    .map(|((ki, xi), pi)| 2.0 * PI * *ki as f64 * xi / pi)
                                    .sum();
                                p += c * (arg + phase).cos();
                            }
                            values[node * m + alpha] += amplitude * p / modes as f64;
                        }
                    }
                    crate::spaceform::Chart::RoundSphere { radius } => {
                        // Smooth perturbation: random quadratic in the
                        // ambient coordinates of the embedded domain point.
                        let coeffs: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        for node in 0..nodes {
                            let e = domain.embed(&grid.point_of(node));
                            let (x, y, z) = (e[0] / radius, e[1] / radius, e[2] / radius);
                            let p = coeffs[0] * x
                                + coeffs[1] * y
                                + coeffs[2] * z
                                + coeffs[3] * x * y
                                + coeffs[4] * x * z
                                + coeffs[5] * y * z
                                + coeffs[6] * x * x
                                + coeffs[7] * y * y
                                + coeffs[8] * z * z;
                            values[node * m + alpha] += amplitude * p / 3.0;
                        }
                    }
                }
            }
            Ok(values)
        }
    }
}

fn require_sphere_pair(domain: &SpaceForm, target: &SpaceForm, preset: &str) -> Result<()> {
    if !domain.is_sphere() || !target.is_sphere() {
        return Err(Error::config(
            "initial_map",
            format!(
                "{preset} needs a 2-sphere domain and target (the convergence hypotheses require dimension >= 2)"
            ),
        ));
    }
    Ok(())
}

/// Compute the hypothesis flags of a built initial state.
pub fn hypotheses(state: &MapState) -> Result<Hypotheses> {
    let n = state.n();
    let m = state.m();
    let k1 = state.domain.curvature();
    let k2 = state.target.curvature();
    let mut max_lambda: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    for node in 0..state.node_count() {
        let nf = crate::curvature::node_frames(state, node)?;
        max_lambda = max_lambda.max(nf.sd.lambdas[0]);
        if n >= 2 {
            min_margin = min_margin.min(frames::area_margin(&nf.sd.lambdas)?);
        }
    }
    let margin = if n >= 2 { Some(min_margin) } else { None };
    Ok(Hypotheses {
        k1,
        k2,
        n,
        m,
        k1_ge_abs_k2: k1 >= k2.abs(),
        k1_plus_k2_positive: k1 + k2 > 0.0,
        dim_at_least_2: n >= 2,
        initial_max_lambda: max_lambda,
        initial_area_margin: margin,
        area_decreasing: margin.map(|v| v > 0.0),
    })
}

/// Build the initial state and the hypothesis flags; refuse borderline
/// (non-positive-margin) initial data unless forced.
pub fn prepare(config: &ScenarioConfig, force: bool) -> Result<(MapState, Hypotheses)> {
    let state = build_initial_map(config)?;
    let hyp = hypotheses(&state)?;
    if let Some(margin) = hyp.initial_area_margin {
        if margin <= 1e-9 && !(force || config.force) {
            return Err(Error::config(
                "initial_map",
                format!(
                    "initial area margin {margin:.3e} is not strictly positive; the convergence hypotheses (k1 >= |k2|, k1 + k2 > 0, dim >= 2, strictly area-decreasing initial map) fail at the margin — pass --force to run anyway"
                ),
            ));
        }
    }
    Ok((state, hyp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus_spec() -> SpaceSpec {
        SpaceSpec::FlatTorus {
            periods: vec![2.0 * PI, 2.0 * PI],
        }
    }

    fn base_config(initial: InitialMap) -> ScenarioConfig {
        ScenarioConfig {
            domain: torus_spec(),
            target: torus_spec(),
            grid: GridConfig {
                resolution: vec![16, 16],
            },
            initial_map: initial,
            flow: serde_json::from_value(serde_json::json!({"t_end": 1.0})).unwrap(),
            output_dir: None,
            seed: 0,
            force: false,
            snapshot_every: 0,
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let json = serde_json::json!({
            "domain": {"kind": "flat_torus", "periods": [6.283185307179586, 6.283185307179586]},
            "target": {"kind": "flat_torus", "periods": [6.283185307179586, 6.283185307179586]},
            "grid": {"resolution": [16, 16]},
            "initial_map": {"preset": "constant", "point": [0.1, 0.2]},
            "flow": {"t_end": 0.5}
        });
        let config: ScenarioConfig = serde_json::from_value(json).unwrap();
        assert!(matches!(config.flow.scheme, crate::flow::Scheme::Rk4));
        assert!(matches!(config.flow.dt, crate::flow::DtPolicy::Cfl { c } if (c - 0.2).abs() < 1e-15));
        let (state, hyp) = prepare(&config, false).unwrap();
        assert!(hyp.initial_max_lambda < 1e-12);
        assert!((state.value(7)[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_preset_has_unit_jacobian_everywhere() {
        let config = base_config(InitialMap::Constant {
            point: vec![0.3, 0.4],
        });
        let (state, hyp) = prepare(&config, false).unwrap();
        assert_eq!(hyp.initial_max_lambda, 0.0);
        for node in [0, 10, 100] {
            let nf = crate::curvature::node_frames(&state, node).unwrap();
            assert!((frames::star_omega(&nf.sd.lambdas) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_identity_is_borderline_and_refused_without_force() {
        let config = base_config(InitialMap::Linear {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        });
        let err = prepare(&config, false).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
        // Forced, it builds with margin ~ 0 and λ = (1, 1).
        let (state, hyp) = prepare(&config, true).unwrap();
        assert!(hyp.initial_area_margin.unwrap().abs() < 1e-9);
        let nf = crate::curvature::node_frames(&state, 5).unwrap();
        assert!((nf.sd.lambdas[0] - 1.0).abs() < 1e-9);
        assert!((nf.sd.lambdas[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn incompatible_linear_matrix_is_rejected() {
        let config = base_config(InitialMap::Linear {
            matrix: vec![vec![0.5, 0.0], vec![0.0, 1.0]],
        });
        assert!(matches!(
            build_initial_map(&config),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn contracted_identity_needs_spheres() {
        let config = base_config(InitialMap::ContractedIdentity { rho: 0.8 });
        let err = build_initial_map(&config).unwrap_err();
        match err {
            Error::Config { reason, .. } => {
                assert!(reason.contains("dimension >= 2"), "{reason}")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn contracted_identity_lambda_and_margin() {
        let config = ScenarioConfig {
            domain: SpaceSpec::RoundSphere { radius: 1.0 },
            target: SpaceSpec::RoundSphere { radius: 1.0 },
            grid: GridConfig {
                resolution: vec![32, 32],
            },
            initial_map: InitialMap::ContractedIdentity { rho: 0.8 },
            flow: serde_json::from_value(serde_json::json!({"t_end": 1.0})).unwrap(),
            output_dir: None,
            seed: 0,
            force: false,
            snapshot_every: 0,
        };
        let (state, hyp) = prepare(&config, false).unwrap();
        let dth = PI / 32.0;
        assert!(
            (hyp.initial_max_lambda - 0.8).abs() <= 2.0 * dth,
            "max λ {} not within 2Δx of 0.8",
            hyp.initial_max_lambda
        );
        assert!(hyp.initial_area_margin.unwrap() > 0.0);
        assert!(hyp.area_decreasing.unwrap());
        // Image keeps clear of the target poles after the build recentering.
        let d = grid::image_pole_distance(&state).unwrap();
        assert!(d > 0.5, "pole distance {d}");
    }

    #[test]
    fn equivariant_preset_is_recentered_and_valid() {
        let config = ScenarioConfig {
            domain: SpaceSpec::RoundSphere { radius: 1.0 },
            target: SpaceSpec::RoundSphere { radius: 1.0 },
            grid: GridConfig {
                resolution: vec![16, 16],
            },
            initial_map: InitialMap::Equivariant {
                m: 2,
                amplitude: 0.4,
            },
            flow: serde_json::from_value(serde_json::json!({"t_end": 1.0})).unwrap(),
            output_dir: None,
            seed: 0,
            force: false,
            snapshot_every: 0,
        };
        let (state, _) = prepare(&config, false).unwrap();
        assert!(grid::image_pole_distance(&state).unwrap() > 0.5);
    }

    #[test]
    fn perturbed_preset_is_deterministic_in_the_seed() {
        let mk = |seed| {
            let config = base_config(InitialMap::Perturbed {
                base: Box::new(InitialMap::Constant {
                    point: vec![0.0, 0.0],
                }),
                amplitude: 0.01,
                seed,
            });
            build_initial_map(&config).unwrap()
        };
        let a = mk(7);
        let b = mk(7);
        let c = mk(8);
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
    }
}
