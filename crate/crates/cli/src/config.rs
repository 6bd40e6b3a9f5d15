//! Run configuration, read from TOML.
//!
//! Every table rejects unknown keys so that a misspelt knob is a config error
//! rather than a silently ignored line.

use std::path::Path;

use loopgeo_core::loops::MIN_NODES;
use loopgeo_core::metric::CHART_NAMES;
use loopgeo_core::morse::Assembly;
use loopgeo_core::variational::{DescentOptions, SweepOptions};
use loopgeo_core::{ChartSpec, PenaltySchedule};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Largest node count accepted anywhere (dense eigensolves grow cubically).
pub const MAX_NODES: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base seed; TOML integers are signed, so seeds are limited to `0..2^63`.
    pub seed: u64,
    /// Node count of generated loops.
    pub nodes: usize,
    pub alpha: usize,
    /// When set, `sweep` continues the penalty over `alpha..=alpha_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<usize>,
    /// Length bound `ℓ`; critical levels are compared against `ℓ²`.
    pub ell: f64,
    pub chart: ChartSpec,
    pub penalty: PenaltyConfig,
    pub descent: DescentConfig,
    pub find: FindConfig,
    pub sweep: SweepConfig,
    pub analyze: AnalyzeConfig,
    pub verify: VerifyConfig,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            nodes: 64,
            alpha: 0,
            alpha_max: None,
            ell: 10.0,
            chart: ChartSpec::named("plane"),
            penalty: PenaltyConfig::default(),
            descent: DescentConfig::default(),
            find: FindConfig::default(),
            sweep: SweepConfig::default(),
            analyze: AnalyzeConfig::default(),
            verify: VerifyConfig::default(),
            export: ExportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub r0: f64,
    pub dr: f64,
    pub stiffness: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        let s = PenaltySchedule::default();
        PenaltyConfig {
            r0: s.r0,
            dr: s.dr,
            stiffness: s.stiffness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        let d = DescentOptions::default();
        DescentConfig {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FindConfig {
    pub starts: usize,
    /// Windings drawn uniformly for charts with an angular coordinate.
    pub windings: Vec<i64>,
    /// Start basepoints are drawn with exhaustion in `(0, r_max)`; defaults to `R_α + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    /// Size of the random perturbation of each start.
    pub amplitude: f64,
    /// Largest iterate of the Bott table computed per critical point; 0 disables it.
    pub m_max: usize,
    /// Relative energy tolerance for deduplication.
    pub dedup_energy: f64,
    /// Basepoint-radius tolerance for deduplication.
    pub dedup_radius: f64,
}

impl Default for FindConfig {
    fn default() -> Self {
        FindConfig {
            starts: 20,
            windings: vec![0, 1],
            r_max: None,
            amplitude: 0.3,
            m_max: 0,
            dedup_energy: 1e-4,
            dedup_radius: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Latitude circles on the stereographic sphere.
    Birkhoff { members: usize },
    /// Circles about the chart origin shrinking to points at both ends.
    Concentric { members: usize, radius: f64 },
    /// Parallels of a surface of revolution.
    Winding {
        members: usize,
        half_height: f64,
        #[serde(default = "one")]
        winding: i64,
    },
}

fn one() -> i64 {
    1
}

impl FamilySpec {
    fn members(&self) -> usize {
        match *self {
            FamilySpec::Birkhoff { members }
            | FamilySpec::Concentric { members, .. }
            | FamilySpec::Winding { members, .. } => members,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub family: FamilySpec,
    pub max_rounds: usize,
    pub window: usize,
    pub rel_change: f64,
    /// Climbing-image steps; by default on for the Birkhoff family, whose
    /// maximum sits on a saddle, and off for the others.
    pub climbing: Option<bool>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let s = SweepOptions::default();
        SweepConfig {
            family: FamilySpec::Concentric {
                members: 9,
                radius: 1.0,
            },
            max_rounds: s.max_rounds,
            window: s.window,
            rel_change: s.rel_change,
            climbing: None,
        }
    }
}

/// Where `analyze` and `export` take their loop from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoopSource {
    /// A loop written by this tool (JSON record) or a `node_index,c0,...` CSV.
    File { path: String },
    /// The discretely critical equator of the stereographic sphere.
    GreatCircle,
    /// A parallel `s = height` of a surface of revolution.
    Parallel {
        height: f64,
        #[serde(default = "one")]
        winding: i64,
    },
    /// A regular polygon in the first two coordinates.
    Circle { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub source: LoopSource,
    /// Descend before analysing.
    pub polish: bool,
    pub method: Assembly,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_band: Option<f64>,
    /// Radius of `K_ℓ` used for the containment claim of penalty-supported points.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_radius: Option<f64>,
    pub m_max: usize,
    pub cross_method: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            source: LoopSource::GreatCircle,
            polish: false,
            method: Assembly::ExactDiscrete,
            zero_band: None,
            k_radius: None,
            m_max: 4,
            cross_method: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Radii of `K_ℓ` to test; each is checked against every length in `ells`.
    pub k_radii: Vec<f64>,
    /// Length bounds; empty means the top-level `ell` only.
    pub ells: Vec<f64>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shell: Option<f64>,
    pub steps: usize,
    pub self_test_samples: usize,
    /// Search range of the curvature threshold radius.
    pub r_max: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            k_radii: vec![1.0],
            ells: Vec::new(),
            samples: 200,
            shell: None,
            steps: 400,
            self_test_samples: 100,
            r_max: 20.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// A report written by `find`, `sweep` or `analyze`; when absent the
    /// `analyze.source` loop is exported.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

fn check(ok: bool, field: &str, rule: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Config(format!("`{field}` {rule}")))
    }
}

impl RunConfig {
    pub fn schedule(&self) -> PenaltySchedule {
        PenaltySchedule {
            r0: self.penalty.r0,
            dr: self.penalty.dr,
            stiffness: self.penalty.stiffness,
        }
    }

    pub fn descent_options(&self) -> DescentOptions {
        DescentOptions {
            tolerance: self.descent.tolerance,
            max_iterations: self.descent.max_iterations,
            ..DescentOptions::default()
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let base = SweepOptions::default();
        SweepOptions {
            descent: DescentOptions {
                tolerance: self.descent.tolerance,
                max_iterations: self.descent.max_iterations,
                ..base.descent
            },
            max_rounds: self.sweep.max_rounds,
            window: self.sweep.window,
            rel_change: self.sweep.rel_change,
            climbing: self
                .sweep
                .climbing
                .unwrap_or(matches!(self.sweep.family, FamilySpec::Birkhoff { .. })),
            ..base
        }
    }

    /// Range checks on every field; messages name the offending key.
    pub fn validate(&self) -> Result<(), Failure> {
        check(
            CHART_NAMES.contains(&self.chart.name.as_str()),
            "chart.name",
            &format!("must be one of {}", CHART_NAMES.join(", ")),
        )?;
        self.chart
            .build()
            .map_err(|e| Failure::Config(format!("`chart`: {e}")))?;
        check(self.seed <= i64::MAX as u64, "seed", "must be below 2^63")?;
        check(
            (MIN_NODES..=MAX_NODES).contains(&self.nodes),
            "nodes",
            &format!("must be in {MIN_NODES}..={MAX_NODES}"),
        )?;
        check(self.ell > 0.0 && self.ell.is_finite(), "ell", "must be positive")?;
        if let Some(hi) = self.alpha_max {
            check(hi > self.alpha, "alpha_max", "must exceed `alpha`")?;
            check(hi - self.alpha <= 64, "alpha_max", "may exceed `alpha` by at most 64")?;
        }
        self.schedule()
            .validate()
            .map_err(|_| Failure::Config("`penalty` needs finite r0, dr > 0 and stiffness > 0".into()))?;
        let d = &self.descent;
        check(
            d.tolerance > 0.0 && d.tolerance < 1.0,
            "descent.tolerance",
            "must be in (0, 1)",
        )?;
        check(d.max_iterations >= 1, "descent.max_iterations", "must be at least 1")?;
        let f = &self.find;
        check((1..=10_000).contains(&f.starts), "find.starts", "must be in 1..=10000")?;
        check(!f.windings.is_empty(), "find.windings", "must not be empty")?;
        check(
            f.windings.iter().all(|w| w.abs() <= 8),
            "find.windings",
            "entries must be in -8..=8",
        )?;
        check(f.r_max.is_none_or(|r| r > 0.0), "find.r_max", "must be positive")?;
        check(
            f.amplitude >= 0.0 && f.amplitude <= 2.0,
            "find.amplitude",
            "must be in [0, 2]",
        )?;
        check(f.m_max <= 8, "find.m_max", "must be at most 8")?;
        check(
            f.dedup_energy > 0.0 && f.dedup_radius > 0.0,
            "find.dedup_energy",
            "and `find.dedup_radius` must be positive",
        )?;
        let s = &self.sweep;
        check(
            (1..=1024).contains(&s.family.members()),
            "sweep.family.members",
            "must be in 1..=1024",
        )?;
        match s.family {
            FamilySpec::Concentric { radius, .. } => check(radius > 0.0, "sweep.family.radius", "must be positive")?,
            FamilySpec::Winding { half_height, .. } => {
                check(half_height >= 0.0, "sweep.family.half_height", "must be non-negative")?
            }
            FamilySpec::Birkhoff { .. } => {}
        }
        check(
            s.max_rounds >= 1 && s.window >= 1,
            "sweep.max_rounds",
            "and `sweep.window` must be at least 1",
        )?;
        check(s.rel_change > 0.0, "sweep.rel_change", "must be positive")?;
        let a = &self.analyze;
        check(a.m_max <= 8, "analyze.m_max", "must be at most 8")?;
        check(
            a.zero_band.is_none_or(|b| b > 0.0),
            "analyze.zero_band",
            "must be positive",
        )?;
        if let LoopSource::Circle { center, radius } = &a.source {
            check(*radius >= 0.0, "analyze.source.radius", "must be non-negative")?;
            check(
                center.len() == self.chart.build().map_or(0, |c| c.dim()),
                "analyze.source.center",
                "must match the chart dimension",
            )?;
        }
        let v = &self.verify;
        check(!v.k_radii.is_empty(), "verify.k_radii", "must not be empty")?;
        check(
            v.k_radii.iter().all(|k| *k >= 0.0),
            "verify.k_radii",
            "entries must be non-negative",
        )?;
        check(
            v.ells.iter().all(|l| *l > 0.0),
            "verify.ells",
            "entries must be positive",
        )?;
        check(
            (1..=100_000).contains(&v.samples),
            "verify.samples",
            "must be in 1..=100000",
        )?;
        check(v.shell.is_none_or(|s| s > 0.0), "verify.shell", "must be positive")?;
        check(v.steps >= 16, "verify.steps", "must be at least 16")?;
        check(v.r_max > 0.0, "verify.r_max", "must be positive")?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configurations serialize to TOML")
    }
}

/// Parses and validates a configuration; parse errors carry line and column.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, Failure> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| {
            let line = text[..s.start].matches('\n').count() + 1;
            let col = s.start - text[..s.start].rfind('\n').map_or(0, |p| p + 1) + 1;
            format!(" at line {line}, column {col}")
        });
        Failure::Config(format!("{origin}{}: {}", at.unwrap_or_default(), e.message()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}
