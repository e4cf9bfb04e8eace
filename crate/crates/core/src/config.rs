//! Run configuration in TOML.
//!
//! ```toml
//! k = 1
//! command = "solve"            # optional, used by `axiharm run`
//! gauge_normalize = true       # optional
//!
//! [rods]
//! gaps = [[-3.0, -1.0], [1.0, 3.0]]
//!
//! [[component]]                # one per axis component, bottom first
//! v = 0.0
//! psi = [0.0]
//! # chi = [0.0]                # optional, nonzero values are allowed
//!
//! [seed]                       # optional: r_star, theta_margin, bump_width, profile_order
//! [grid]                       # optional: h, core, growth, level
//! [solver]                     # optional: tol, max_iters, patience, max_sweeps, check_every, r_schedule
//! [reconstruct]                # optional: convention, endpoint_margin, warn_threshold
//! [diagnostics]                # optional: tol, rays, samples_per_ray, decay_radii
//! [output]                     # optional: dir, checkpoints
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::rod_structure::{ComponentConstants, RodConfig, SingularMapSpec};
use crate::seed_map::SeedConfig;
use crate::solver::{GridParams, SolveParams};
use crate::spacetime::{ReconstructOptions, TwistConvention};
use crate::target_geometry::{gauge_normalize, GaugeIsometry, TargetPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    #[default]
    Solve,
    Validate,
    Reconstruct,
    Report,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RodsSection {
    gaps: Spanned<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentSection {
    v: f64,
    psi: Vec<f64>,
    #[serde(default)]
    chi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    h: Option<f64>,
    core: Option<f64>,
    growth: Option<f64>,
    level: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedSection {
    r_star: Option<f64>,
    theta_margin: Option<f64>,
    bump_width: Option<f64>,
    profile_order: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconstructSection {
    convention: Option<TwistConvention>,
    endpoint_margin: Option<f64>,
    warn_threshold: Option<f64>,
}

/// Tolerances and sampling of the post-solve checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsParams {
    /// Absolute slack in the pointwise inequalities.
    #[serde(default = "default_diag_tol")]
    pub tol: f64,
    /// Rays for the decay-at-infinity samples.
    #[serde(default = "default_rays")]
    pub rays: usize,
    #[serde(default = "default_samples")]
    pub samples_per_ray: usize,
    /// Radii for the seed tension fit.
    #[serde(default = "default_decay_radii")]
    pub decay_radii: usize,
}

fn default_diag_tol() -> f64 {
    1e-6
}
fn default_rays() -> usize {
    7
}
fn default_samples() -> usize {
    16
}
fn default_decay_radii() -> usize {
    10
}

impl Default for DiagnosticsParams {
    fn default() -> Self {
        Self {
            tol: default_diag_tol(),
            rays: default_rays(),
            samples_per_ray: default_samples(),
            decay_radii: default_decay_radii(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputParams {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Write a field checkpoint for every radius.
    #[serde(default = "default_true")]
    pub checkpoints: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

impl Default for OutputParams {
    fn default() -> Self {
        Self { dir: default_dir(), checkpoints: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    k: usize,
    #[serde(default)]
    command: Command,
    #[serde(default = "default_true")]
    gauge_normalize: bool,
    rods: Spanned<RodsSection>,
    #[serde(default)]
    component: Vec<Spanned<ComponentSection>>,
    #[serde(default)]
    seed: Option<Spanned<SeedSection>>,
    #[serde(default)]
    grid: Option<Spanned<GridSection>>,
    #[serde(default)]
    solver: Option<Spanned<SolveParams>>,
    #[serde(default)]
    reconstruct: Option<Spanned<ReconstructSection>>,
    #[serde(default)]
    diagnostics: Option<Spanned<DiagnosticsParams>>,
    #[serde(default)]
    output: Option<OutputParams>,
}

/// Fully resolved configuration; echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub k: usize,
    pub rods: RodConfig,
    /// Constants as written.
    pub raw_spec: SingularMapSpec,
    /// Constants after the gauge normalisation (equal to `raw_spec` when it
    /// is switched off).
    pub spec: SingularMapSpec,
    /// Isometry taking `raw_spec` to `spec`.
    pub gauge: GaugeIsometry,
    pub seed: SeedConfig,
    pub grid: GridParams,
    pub solver: SolveParams,
    pub reconstruct: ReconstructOptions,
    pub diagnostics: DiagnosticsParams,
    pub output: OutputParams,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn at<T>(text: &str, s: &Spanned<T>, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {}: {e}", line_of(text, s.span().start)))
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let rods_span = &raw.rods;
    let gaps = &rods_span.get_ref().gaps;
    let rods = RodConfig::new(gaps.get_ref().iter().map(|g| (g[0], g[1])).collect()).map_err(|e| at(text, gaps, e))?;

    let k = raw.k;
    let expected = rods.num_components();
    if raw.component.len() != expected {
        return Err(at(
            text,
            rods_span,
            format!("{} gaps need {expected} [[component]] entries (bottom first), found {}", rods.n(), raw.component.len()),
        ));
    }
    let mut points = Vec::with_capacity(expected);
    let mut allow_chi = false;
    for (j, c) in raw.component.iter().enumerate() {
        let s = c.get_ref();
        if s.psi.len() != k {
            return Err(at(text, c, format!("component {j}: psi has {} entries but k = {k}", s.psi.len())));
        }
        let chi = match &s.chi {
            Some(chi) if chi.len() != k => {
                return Err(at(text, c, format!("component {j}: chi has {} entries but k = {k}", chi.len())));
            }
            Some(chi) => chi.clone(),
            None => vec![0.0; k],
        };
        allow_chi |= chi.iter().any(|x| *x != 0.0);
        let p = TargetPoint::new(0.0, s.v, chi, s.psi.clone());
        if p.coords().iter().any(|x| !x.is_finite()) {
            return Err(at(text, c, format!("component {j}: constants must be finite")));
        }
        points.push(p);
    }
    let raw_spec = SingularMapSpec::from_points(k, &points, allow_chi);
    let (gauge, spec) = if raw.gauge_normalize {
        let (iso, mapped) = gauge_normalize(&points)?;
        (iso, SingularMapSpec::from_points(k, &mapped, allow_chi))
    } else {
        (GaugeIsometry::identity(k), raw_spec.clone())
    };
    if !gauge.is_identity() {
        log::info!(
            "gauge normalisation: Heisenberg translation with v shift {:+.6}, chi shift {:?}, psi shift {:?}",
            gauge.shift_v,
            gauge.shift_chi,
            gauge.shift_psi
        );
    }
    spec.check_against(&rods)?;

    let mut seed = SeedConfig::default_for(&rods);
    if let Some(s) = &raw.seed {
        let r = s.get_ref();
        seed.r_star = r.r_star.unwrap_or(seed.r_star);
        seed.theta_margin = r.theta_margin.unwrap_or(seed.theta_margin);
        seed.bump_width = r.bump_width.unwrap_or(seed.bump_width);
        seed.profile_order = r.profile_order.unwrap_or(seed.profile_order);
        seed.validate(&rods).map_err(|e| at(text, s, e))?;
    }

    let mut grid = GridParams::default_for(&rods);
    if let Some(g) = &raw.grid {
        let r = g.get_ref();
        grid.h = r.h.unwrap_or(grid.h);
        grid.core = r.core.unwrap_or(grid.core);
        grid.growth = r.growth.unwrap_or(grid.growth);
        grid.level = r.level.unwrap_or(grid.level);
        crate::solver::Grid::build(&rods, grid.core * 1.5, &grid).map_err(|e| at(text, g, e))?;
    }

    let solver = match &raw.solver {
        Some(s) => {
            s.get_ref().validate().map_err(|e| at(text, s, e))?;
            s.get_ref().clone()
        }
        None => SolveParams::default(),
    };

    let mut reconstruct = ReconstructOptions::default_for(&rods);
    if let Some(r) = &raw.reconstruct {
        let x = r.get_ref();
        reconstruct.convention = x.convention.unwrap_or(reconstruct.convention);
        reconstruct.endpoint_margin = x.endpoint_margin.unwrap_or(reconstruct.endpoint_margin);
        reconstruct.warn_threshold = x.warn_threshold.unwrap_or(reconstruct.warn_threshold);
        if !(reconstruct.endpoint_margin >= 0.0 && reconstruct.warn_threshold > 0.0) {
            return Err(at(text, r, "endpoint_margin must be non-negative and warn_threshold positive"));
        }
    }

    let diagnostics = match &raw.diagnostics {
        Some(d) => {
            let x = d.get_ref();
            if !(x.tol > 0.0) || x.rays == 0 || x.samples_per_ray < 2 || x.decay_radii < 3 {
                return Err(at(text, d, "need tol > 0, rays >= 1, samples_per_ray >= 2, decay_radii >= 3"));
            }
            x.clone()
        }
        None => DiagnosticsParams::default(),
    };

    Ok(RunConfig {
        command: raw.command,
        k,
        rods,
        raw_spec,
        spec,
        gauge,
        seed,
        grid,
        solver,
        reconstruct,
        diagnostics,
        output: raw.output.unwrap_or_default(),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// N = 1, k = 0 with all constants zero.
pub const SCHWARZSCHILD_TOML: &str = r#"# Schwarzschild: one horizon rod of half-length 1, static data
k = 0

[rods]
gaps = [[-1.0, 1.0]]

[[component]]
v = 0.0
psi = []

[[component]]
v = 0.0
psi = []
"#;

impl RunConfig {
    /// Components' constants in the solving gauge, for building seeds.
    pub fn constants(&self) -> &[ComponentConstants] {
        &self.spec.components
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(SCHWARZSCHILD_TOML).unwrap();
        assert_eq!(c.k, 0);
        assert_eq!(c.rods.n(), 1);
        assert_eq!(c.solver, SolveParams::default());
        assert_eq!(c.grid, GridParams::default_for(&c.rods));
        assert!(c.gauge.is_identity());
        assert_eq!(c.command, Command::Solve);
    }

    #[test]
    fn two_gaps_three_constants_are_normalised() {
        let text = r#"
k = 2
[rods]
gaps = [[-3.0, -1.0], [1.0, 3.0]]
[[component]]
v = 0.5
psi = [0.1, -0.2]
[[component]]
v = 1.0
psi = [0.3, 0.0]
[[component]]
v = -0.4
psi = [0.0, 0.7]
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.spec.components.len(), 3);
        let b = &c.spec.components[0];
        assert_eq!(b.v, 0.0);
        assert!(b.psi.iter().all(|x| *x == 0.0));
        // the isometry maps the written constants onto the normalised ones
        for (r, s) in c.raw_spec.points().iter().zip(c.spec.points()) {
            let m = c.gauge.apply(r);
            assert!((m.v - s.v).abs() < 1e-15);
            assert_eq!(m.psi, s.psi);
        }
    }

    #[test]
    fn psi_length_mismatch_names_the_line() {
        let text = "k = 1\n[rods]\ngaps = [[-1.0, 1.0]]\n[[component]]\nv = 0.0\npsi = [0.0]\n[[component]]\nv = 0.0\npsi = [0.0, 1.0]\n";
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("line 7") && e.contains("psi has 2 entries"), "{e}");
    }

    #[test]
    fn overlapping_gaps_are_rejected_with_line() {
        let text = "k = 0\n[rods]\ngaps = [[-1.0, 1.0], [0.5, 2.0]]\n";
        let e = parse_config(text).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        assert!(e.to_lowercase().contains("overlap") || e.contains("increasing") || e.contains("disjoint"), "{e}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{SCHWARZSCHILD_TOML}\n[solver]\ntolerance = 1e-8\n");
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("unknown field") && e.contains("line"), "{e}");
    }
}
