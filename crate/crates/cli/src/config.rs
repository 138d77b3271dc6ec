//! Declarative run configuration, read from TOML and patched by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use curvling::io::{ColumnSpec, InitKind, Polarity, SvgStyle};
use curvling::{KinematicConstraints, ShapeConfig, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of every random choice in the run.
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    pub input: InputConfig,
    pub polyline: PolylineConfig,
    pub solver: SolverConfig,
    pub shape: ShapeConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Grayscale PGM image.
    pub image: Option<PathBuf>,
    /// CSV point cloud.
    pub points: Option<PathBuf>,
    pub polarity: Polarity,
    /// Pixels at or below this fraction of the largest weight are dropped.
    pub threshold: f64,
    pub columns: ColumnSpec,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { image: None, points: None, polarity: Polarity::Dark, threshold: 0.0, columns: ColumnSpec::xy() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolylineConfig {
    pub init: InitKind,
    /// Starting polyline JSON; overrides `init`.
    pub file: Option<PathBuf>,
    pub segments: usize,
    pub disjoint_mode: bool,
}

impl Default for PolylineConfig {
    fn default() -> Self {
        Self { init: InitKind::RandomWalk, file: None, segments: 500, disjoint_mode: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the polyline every this many outer iterations; 0 disables.
    pub dump_every: usize,
    /// Draw the atoms under the polyline in the SVG.
    pub draw_points: bool,
    pub svg: SvgStyle,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), dump_every: 0, draw_points: false, svg: SvgStyle::default() }
    }
}

/// Flags that override the configuration file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Grayscale PGM image to discretize.
    #[arg(long, conflicts_with = "points")]
    pub image: Option<PathBuf>,
    /// CSV point cloud.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Starting polyline JSON.
    #[arg(long)]
    pub polyline: Option<PathBuf>,
    /// Seed of every random choice in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of polyline segments.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Initial polyline: random-walk, grid-serpentine or uniform-vertices.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitKind>,
    /// Largest segment length.
    #[arg(long)]
    pub k1: Option<f64>,
    /// Largest second difference of the vertices.
    #[arg(long)]
    pub k2: Option<f64>,
    /// Outer iterations of the polyline optimization.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Dual solver: gradient, bb, nesterov, lbfgs or hybrid.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<curvling::Method>,
    /// Write the polyline every this many outer iterations.
    #[arg(long)]
    pub dump_every: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_init(s: &str) -> Result<InitKind, String> {
    parse_enum(s)
}

fn parse_method(s: &str) -> Result<curvling::Method, String> {
    parse_enum(s)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// File (if any) patched by the flags.
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(p) = &flags.image {
            cfg.input.image = Some(p.clone());
            cfg.input.points = None;
        }
        if let Some(p) = &flags.points {
            cfg.input.points = Some(p.clone());
            cfg.input.image = None;
        }
        if let Some(p) = &flags.polyline {
            cfg.polyline.file = Some(p.clone());
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(p) = flags.segments {
            cfg.polyline.segments = p;
        }
        if let Some(k) = flags.init {
            cfg.polyline.init = k;
        }
        if flags.k1.is_some() || flags.k2.is_some() {
            let old = cfg.shape.constraints.unwrap_or(KinematicConstraints { k1: f64::INFINITY, k2: f64::INFINITY });
            cfg.shape.constraints =
                Some(KinematicConstraints::new(flags.k1.unwrap_or(old.k1), flags.k2.unwrap_or(old.k2))?);
        }
        if let Some(m) = flags.max_iter {
            cfg.shape.max_iter = m;
        }
        if let Some(m) = flags.method {
            cfg.solver.method = m;
        }
        if let Some(k) = flags.dump_every {
            cfg.output.dump_every = k;
        }
        if let Some(o) = &flags.out {
            cfg.output.dir = o.clone();
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input.image, &self.input.points) {
            (Some(_), Some(_)) => bail!("give either an image or a point cloud, not both"),
            (None, None) => bail!("no input: set input.image or input.points (or --image/--points)"),
            _ => {}
        }
        if self.polyline.file.is_none() && self.polyline.segments == 0 {
            bail!("polyline.segments must be at least 1");
        }
        if !(0.0..1.0).contains(&self.input.threshold) {
            bail!("input.threshold must lie in [0, 1)");
        }
        if let Some(k) = self.shape.constraints {
            KinematicConstraints::new(k.k1, k.k2)?;
        }
        self.solver.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 4
            [input]
            image = "a.pgm"
            polarity = "bright"
            [polyline]
            init = "grid_serpentine"
            segments = 80
            [solver]
            method = "lbfgs"
            grad_tol = 1e-9
            [shape]
            max_iter = 10
            constraints = { k1 = 0.1, k2 = 0.05 }
            [output]
            dump_every = 5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.polyline.init, InitKind::GridSerpentine);
        assert_eq!(cfg.solver.method, curvling::Method::Lbfgs);
        assert_eq!(cfg.shape.constraints.unwrap().k2, 0.05);
        assert_eq!(cfg.solver.outer_max, SolverConfig::default().outer_max);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[solver]\ngrad_toll = 1.0\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let flags = Overrides {
            points: Some("p.csv".into()),
            seed: Some(9),
            k1: Some(0.2),
            method: Some(curvling::Method::Bb),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.shape.constraints.unwrap().k1, 0.2);
        assert!(cfg.shape.constraints.unwrap().k2.is_infinite());
        assert_eq!(cfg.solver.method, curvling::Method::Bb);
        cfg.validate().unwrap();
    }

    #[test]
    fn missing_input_rejected() {
        assert!(RunConfig::default().validate().is_err());
    }

    #[test]
    fn method_names_accept_dashes() {
        assert_eq!(parse_init("random-walk").unwrap(), InitKind::RandomWalk);
        assert!(parse_method("newton").is_err());
    }
}
