//! TOML experiment configuration.
//!
//! Every section and key is optional except `experiment`. Unknown keys are
//! rejected. Errors name the offending key as a dotted path.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::discretization::{BoundaryData, BoundarySpec, FaceSet, PhiBoundary, QDirichlet};
use crate::energy::{EnergyParams, GrowthRegime};
use crate::error::{Error, Result};
use crate::minimize::MinimizeOptions;
use crate::tensor::{Mat3, QTensor, Vec3};

/// Incompressibility penalty used by the stripe preset when `params.c_det` is unset.
pub const STRIPE_C_DET: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    AffineSanity,
    SpontaneousFloor,
    Stripe,
    BarrierSweep,
    CnAudit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AffineSanity => "affine_sanity",
            ExperimentKind::SpontaneousFloor => "spontaneous_floor",
            ExperimentKind::Stripe => "stripe",
            ExperimentKind::BarrierSweep => "barrier_sweep",
            ExperimentKind::CnAudit => "cn_audit",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "affine_sanity" => ExperimentKind::AffineSanity,
            "spontaneous_floor" => ExperimentKind::SpontaneousFloor,
            "stripe" => ExperimentKind::Stripe,
            "barrier_sweep" => ExperimentKind::BarrierSweep,
            "cn_audit" => ExperimentKind::CnAudit,
            other => {
                return Err(Error::config(
                    "experiment",
                    format!("unknown experiment `{other}` (expected affine_sanity, spontaneous_floor, stripe, barrier_sweep or cn_audit)"),
                ))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub extents: [f64; 3],
    pub resolution: [usize; 3],
    pub plane_strain: bool,
}

/// Anchoring regime of the stripe experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StripeRegime {
    /// Dirichlet order tensor on the clamped faces.
    Dirichlet,
    /// Surface anchoring energy on the clamped faces.
    Surface,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StripeConfig {
    pub lambda: f64,
    pub delta: f64,
    /// Clamp order tensor; `None` selects the stress-free state at unit stretch.
    pub q0: Option<QTensor>,
    pub regime: StripeRegime,
    /// `a0` was left to the preset (chosen so unit stretch is stress-free).
    pub auto_a0: bool,
    /// Amplitude (radians) of the smooth director perturbation of the third start.
    pub perturbation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub k_max: u32,
    pub director: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    pub snapshot: PathBuf,
    /// Voxels per axis; 0 selects the default.
    pub resolution: usize,
    pub half_thickness: f64,
    pub samples: usize,
}

/// Fully validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridSpec,
    pub params: EnergyParams,
    pub boundary: BoundarySpec,
    pub minimize: MinimizeOptions,
    pub stripe: StripeConfig,
    pub sweep: SweepConfig,
    pub audit: Option<AuditConfig>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    grid: Option<RawGrid>,
    params: Option<RawParams>,
    boundary: Option<RawBoundary>,
    minimize: Option<RawMinimize>,
    stripe: Option<RawStripe>,
    barrier_sweep: Option<RawSweep>,
    cn_audit: Option<RawAudit>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    extents: Option<[f64; 3]>,
    resolution: Option<[usize; 3]>,
    plane_strain: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawParams {
    mu: Option<f64>,
    a0: Option<f64>,
    alpha: Option<f64>,
    p: Option<f64>,
    c_adj: Option<f64>,
    c_det: Option<f64>,
    kappa: Option<f64>,
    r: Option<f64>,
    l: Option<[f64; 4]>,
    a_t: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
    eps_barrier: Option<f64>,
    det_barrier: Option<f64>,
    delta0: Option<f64>,
    sigma: Option<f64>,
    q0: Option<[f64; 5]>,
    regime: Option<GrowthRegime>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    phi: Option<String>,
    faces: Option<Vec<String>>,
    components: Option<[bool; 3]>,
    affine: Option<[[f64; 3]; 3]>,
    translation: Option<[f64; 3]>,
    average_lo: Option<[f64; 3]>,
    average_hi: Option<[f64; 3]>,
    q_faces: Option<Vec<String>>,
    q_value: Option<[f64; 5]>,
    surface_faces: Option<Vec<String>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMinimize {
    max_iters: Option<usize>,
    grad_tol: Option<f64>,
    memory: Option<usize>,
    armijo_c: Option<f64>,
    backtrack_factor: Option<f64>,
    feasibility_margin: Option<f64>,
    max_step: Option<f64>,
    max_backtracks: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawStripe {
    lambda: Option<f64>,
    delta: Option<f64>,
    q0: Option<[f64; 5]>,
    regime: Option<u8>,
    perturbation: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    k_max: Option<u32>,
    director: Option<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAudit {
    snapshot: PathBuf,
    resolution: Option<usize>,
    half_thickness: Option<f64>,
    samples: Option<usize>,
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { key, message } => Error::Config {
            key: format!("{prefix}.{key}"),
            message,
        },
        other => other,
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
        .map(str::to_string)
        .unwrap_or_else(|| "toml".into());
    Error::Config {
        key,
        message: msg.trim().to_string(),
    }
}

fn faces(key: &str, names: &[String]) -> Result<FaceSet> {
    FaceSet::parse(names).map_err(|e| Error::config(key, e.to_string()))
}

fn default_grid(kind: ExperimentKind) -> GridSpec {
    match kind {
        ExperimentKind::Stripe => GridSpec {
            extents: [1.0, 1.0, 0.5],
            resolution: [65, 65, 1],
            plane_strain: true,
        },
        _ => GridSpec {
            extents: [0.5; 3],
            resolution: [2; 3],
            plane_strain: false,
        },
    }
}

fn build_params(raw: RawParams, mut p: EnergyParams) -> Result<EnergyParams> {
    macro_rules! set {
        ($($field:ident => $target:ident),*) => {
            $(if let Some(v) = raw.$field { p.$target = v; })*
        };
    }
    set!(mu => mu, a0 => a0, alpha => alpha_coer, p => p, c_adj => c_adj, c_det => c_det,
         kappa => kappa, r => r_exp, l => l, a_t => a_t, b => b, c => c,
         eps_barrier => eps_barrier, det_barrier => det_barrier, delta0 => delta0,
         sigma => sigma, regime => regime);
    if let Some(q) = raw.q0 {
        p.q0_surface = QTensor::from_coeffs(q);
    }
    p.validate().map_err(|e| prefixed("params", e))?;
    Ok(p)
}

fn build_boundary(raw: RawBoundary) -> Result<BoundarySpec> {
    let data = BoundaryData {
        a: raw
            .affine
            .map(|a| Mat3::from_fn(|i, j| a[i][j]))
            .unwrap_or_else(Mat3::identity),
        t: raw.translation.map(Vec3::from).unwrap_or_else(Vec3::zeros),
    };
    let phi =
        match raw.phi.as_deref().unwrap_or("none") {
            "none" => PhiBoundary::None,
            "dirichlet" => PhiBoundary::DirichletFull(data),
            "average" => {
                let lo = Vec3::from(raw.average_lo.ok_or_else(|| {
                    Error::config("boundary.average_lo", "required for phi = \"average\"")
                })?);
                let hi = Vec3::from(raw.average_hi.ok_or_else(|| {
                    Error::config("boundary.average_hi", "required for phi = \"average\"")
                })?);
                if (0..3).any(|d| lo[d] > hi[d]) {
                    return Err(Error::config(
                        "boundary.average_lo",
                        "requires average_lo <= average_hi componentwise",
                    ));
                }
                PhiBoundary::PartialAverage { lo, hi }
            }
            "partial" => {
                let f = faces("boundary.faces", raw.faces.as_deref().unwrap_or(&[]))?;
                if f.is_empty() {
                    return Err(Error::config(
                        "boundary.faces",
                        "phi = \"partial\" needs at least one face",
                    ));
                }
                PhiBoundary::DirichletPartial {
                    faces: f,
                    components: raw.components.unwrap_or([true; 3]),
                    data,
                }
            }
            other => return Err(Error::config(
                "boundary.phi",
                format!(
                    "unknown condition `{other}` (expected none, dirichlet, average or partial)"
                ),
            )),
        };
    let q = match (raw.q_faces, raw.q_value) {
        (None, None) => None,
        (Some(f), v) => {
            let value = QTensor::from_coeffs(v.unwrap_or([0.0; 5]));
            if !value.in_q_set(0.0) {
                return Err(Error::config(
                    "boundary.q_value",
                    "outside the admissible set (lambda_min > -1/3)",
                ));
            }
            Some(QDirichlet {
                faces: faces("boundary.q_faces", &f)?,
                value,
            })
        }
        (None, Some(_)) => {
            return Err(Error::config(
                "boundary.q_value",
                "requires boundary.q_faces",
            ))
        }
    };
    let surface = faces(
        "boundary.surface_faces",
        raw.surface_faces.as_deref().unwrap_or(&[]),
    )?;
    Ok(BoundarySpec { phi, q, surface })
}

fn build_minimize(raw: RawMinimize, seed: u64) -> Result<MinimizeOptions> {
    let mut o = MinimizeOptions {
        seed,
        ..MinimizeOptions::default()
    };
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = raw.$field { o.$field = v; })* };
    }
    set!(
        max_iters,
        grad_tol,
        memory,
        armijo_c,
        backtrack_factor,
        feasibility_margin,
        max_step,
        max_backtracks
    );
    o.validate().map_err(|e| prefixed("minimize", e))?;
    Ok(o)
}

fn build_stripe(raw: RawStripe, auto_a0: bool, default_delta: f64) -> Result<StripeConfig> {
    let lambda = raw.lambda.unwrap_or(1.3);
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::config(
            "stripe.lambda",
            format!("requires lambda >= 1, got {lambda}"),
        ));
    }
    let delta = raw.delta.unwrap_or(default_delta);
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config(
            "stripe.delta",
            format!("requires delta > 0, got {delta}"),
        ));
    }
    if delta >= lambda {
        return Err(Error::config(
            "stripe.delta",
            format!("requires delta < lambda, got {delta}"),
        ));
    }
    let q0 = match raw.q0 {
        Some(c) => {
            let q = QTensor::from_coeffs(c);
            if !q.in_q_set(0.0) {
                return Err(Error::config(
                    "stripe.q0",
                    "outside the admissible set (lambda_min > -1/3)",
                ));
            }
            Some(q)
        }
        None => None,
    };
    let regime = match raw.regime.unwrap_or(1) {
        1 => StripeRegime::Dirichlet,
        2 => StripeRegime::Surface,
        r => {
            return Err(Error::config(
                "stripe.regime",
                format!("expected 1 or 2, got {r}"),
            ))
        }
    };
    let perturbation = raw.perturbation.unwrap_or(0.1);
    if !(perturbation >= 0.0 && perturbation.is_finite()) {
        return Err(Error::config(
            "stripe.perturbation",
            "must be finite and nonnegative",
        ));
    }
    Ok(StripeConfig {
        lambda,
        delta,
        q0,
        regime,
        auto_a0,
        perturbation,
    })
}

/// Parses and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(toml_error)?;
    let kind = ExperimentKind::parse(&raw.experiment)?;
    let seed = raw.seed.unwrap_or(0);

    let mut grid = default_grid(kind);
    if let Some(g) = raw.grid {
        grid.extents = g.extents.unwrap_or(grid.extents);
        grid.resolution = g.resolution.unwrap_or(grid.resolution);
        grid.plane_strain = g.plane_strain.unwrap_or(grid.plane_strain);
    }
    if let Some(d) = (0..3).find(|&d| !(grid.extents[d] > 0.0 && grid.extents[d].is_finite())) {
        return Err(Error::config(
            "grid.extents",
            format!("extent {d} must be positive"),
        ));
    }
    let active = if grid.plane_strain { 2 } else { 3 };
    if let Some(d) = (0..active).find(|&d| grid.resolution[d] < 2) {
        return Err(Error::config(
            "grid.resolution",
            format!("axis {d} needs at least 2 nodes"),
        ));
    }

    let raw_params = raw.params.unwrap_or_default();
    let stripe = kind == ExperimentKind::Stripe;
    let auto_a0 = stripe && raw_params.a0.is_none();
    let mut base = EnergyParams::default();
    if stripe {
        if raw_params.c_det.is_none() {
            base.c_det = STRIPE_C_DET;
        }
        if raw.stripe.as_ref().is_some_and(|s| s.delta.is_some()) && raw_params.delta0.is_some() {
            return Err(Error::config(
                "stripe.delta",
                "set either stripe.delta or params.delta0, not both",
            ));
        }
    }
    let mut params = build_params(raw_params, base)?;

    let stripe_cfg = build_stripe(raw.stripe.unwrap_or_default(), auto_a0, params.delta0)?;
    if stripe {
        if !grid.plane_strain {
            return Err(Error::config(
                "grid.plane_strain",
                "the stripe experiment requires plane strain",
            ));
        }
        if raw.boundary.is_some() {
            return Err(Error::config(
                "boundary",
                "the stripe experiment sets its own boundary conditions",
            ));
        }
        params.delta0 = stripe_cfg.delta;
        if stripe_cfg.regime == StripeRegime::Surface && !(params.sigma > 0.0) {
            return Err(Error::config(
                "params.sigma",
                "stripe regime 2 requires sigma > 0",
            ));
        }
    }
    let boundary = build_boundary(raw.boundary.unwrap_or_default())?;

    let sweep = {
        let r = raw.barrier_sweep.unwrap_or_default();
        let k_max = r.k_max.unwrap_or(6);
        if !(1..=15).contains(&k_max) {
            return Err(Error::config(
                "barrier_sweep.k_max",
                format!("requires 1 <= k_max <= 15, got {k_max}"),
            ));
        }
        let director = Vec3::from(r.director.unwrap_or([0.0, 0.0, 1.0]));
        if !(director.norm() > 0.0) {
            return Err(Error::config("barrier_sweep.director", "must be nonzero"));
        }
        SweepConfig {
            k_max,
            director: director.normalize(),
        }
    };

    let audit = match raw.cn_audit {
        Some(a) => {
            let half_thickness = a
                .half_thickness
                .unwrap_or(crate::io::DEFAULT_HALF_THICKNESS);
            if !(half_thickness > 0.0) {
                return Err(Error::config("cn_audit.half_thickness", "must be positive"));
            }
            let samples = a.samples.unwrap_or(24);
            if samples == 0 {
                return Err(Error::config("cn_audit.samples", "must be positive"));
            }
            Some(AuditConfig {
                snapshot: a.snapshot,
                resolution: a.resolution.unwrap_or(0),
                half_thickness,
                samples,
            })
        }
        None if kind == ExperimentKind::CnAudit => {
            return Err(Error::config(
                "cn_audit.snapshot",
                "required for experiment = \"cn_audit\"",
            ))
        }
        None => None,
    };

    Ok(ExperimentConfig {
        experiment: kind,
        seed,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        grid,
        params,
        boundary,
        minimize: build_minimize(raw.minimize.unwrap_or_default(), seed)?,
        stripe: stripe_cfg,
        sweep,
        audit,
    })
}

/// Reads and validates a configuration file. Relative snapshot paths are
/// resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config_str(&text)?;
    if let Some(a) = cfg.audit.as_mut() {
        if a.snapshot.is_relative() {
            if let Some(dir) = path.parent() {
                a.snapshot = dir.join(&a.snapshot);
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> (String, String) {
        match e {
            Error::Config { key, message } => (key, message),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_stripe_gets_defaults() {
        let c = parse_config_str("experiment = \"stripe\"\n").unwrap();
        assert_eq!(c.experiment, ExperimentKind::Stripe);
        assert_eq!(c.params.p, 4.0);
        assert_eq!(c.params.r_exp, 6.0);
        assert_eq!(c.params.a0, 3.0);
        assert_eq!(c.params.delta0, 0.1);
        assert_eq!(c.params.c_det, STRIPE_C_DET);
        assert_eq!(c.minimize.feasibility_margin, 1e-3);
        assert_eq!(c.stripe.lambda, 1.3);
        assert!(c.stripe.auto_a0);
        assert_eq!(c.stripe.regime, StripeRegime::Dirichlet);
        assert_eq!(c.grid.resolution, [65, 65, 1]);
        assert!(c.grid.plane_strain);
    }

    #[test]
    fn growth_condition_rejected() {
        let (k, m) = key_of(
            parse_config_str("experiment = \"stripe\"\n[params]\nr = 3\np = 4\n").unwrap_err(),
        );
        assert_eq!(k, "params.r");
        assert!(m.contains("r > max{3, p/(p-3)} = 4"), "{m}");
    }

    #[test]
    fn stretch_below_one_rejected() {
        let (k, m) = key_of(
            parse_config_str("experiment = \"stripe\"\n[stripe]\nlambda = 0.5\n").unwrap_err(),
        );
        assert_eq!(k, "stripe.lambda");
        assert!(m.contains("lambda >= 1"));
        let (k, _) =
            key_of(parse_config_str("experiment = \"stripe\"\n[stripe]\ndelta = 0\n").unwrap_err());
        assert_eq!(k, "stripe.delta");
    }

    #[test]
    fn unknown_keys_rejected() {
        let (k, _) =
            key_of(parse_config_str("experiment = \"stripe\"\n[params]\nfoo = 1\n").unwrap_err());
        assert_eq!(k, "foo");
        let (k, _) = key_of(parse_config_str("experiment = \"nope\"\n").unwrap_err());
        assert_eq!(k, "experiment");
        assert!(parse_config_str("seed = 1\n").is_err());
    }

    #[test]
    fn boundary_section() {
        let c = parse_config_str(
            "experiment = \"affine_sanity\"\n[boundary]\nphi = \"partial\"\nfaces = [\"x-\", \"y\"]\ncomponents = [true, false, false]\n\
             affine = [[2, 0, 0], [0, 1, 0], [0, 0, 1]]\nq_faces = [\"all\"]\nq_value = [0.1, 0, 0, 0, 0]\nsurface_faces = [\"z+\"]\n",
        )
        .unwrap();
        match c.boundary.phi {
            PhiBoundary::DirichletPartial {
                faces,
                components,
                data,
            } => {
                assert_eq!(
                    faces,
                    FaceSet::Y_FACES.with(crate::discretization::Face::XMin)
                );
                assert_eq!(components, [true, false, false]);
                assert_eq!(data.a[(0, 0)], 2.0);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.boundary.q.unwrap().faces, FaceSet::ALL);
        let (k, _) = key_of(
            parse_config_str("experiment = \"affine_sanity\"\n[boundary]\nq_faces = [\"w\"]\n")
                .unwrap_err(),
        );
        assert_eq!(k, "boundary.q_faces");
        let (k, _) = key_of(
            parse_config_str("experiment = \"stripe\"\n[boundary]\nphi = \"none\"\n").unwrap_err(),
        );
        assert_eq!(k, "boundary");
    }

    #[test]
    fn audit_needs_snapshot() {
        let (k, _) = key_of(parse_config_str("experiment = \"cn_audit\"\n").unwrap_err());
        assert_eq!(k, "cn_audit.snapshot");
        let c = parse_config_str("experiment = \"cn_audit\"\n[cn_audit]\nsnapshot = \"a.csv\"\n")
            .unwrap();
        assert_eq!(c.audit.unwrap().resolution, 0);
    }
}
