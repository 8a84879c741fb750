//! Run configuration: a TOML file with sections, flag overrides on top,
//! and central defaults. Every run writes the resolved snapshot next to
//! its outputs so committed configs reproduce bit-identical results.

use anyhow::{bail, Context, Result};
use halfspace::assembly::{BuiltinPhi, IncomingData, TabulatedPhi};
use halfspace::model::ModelKind;
use halfspace::postprocess::{FilterKind, FilterSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub filter: FilterSection,
    pub incoming: IncomingSection,
    pub output: OutputSection,
    pub recovery: RecoverySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub model: String,
    pub u: f64,
    pub n: usize,
    pub alpha: f64,
    /// Half-line rule size; 0 means the default `2n + 8`.
    pub quad_points: usize,
    pub boundary_points: usize,
    pub tol_zero: f64,
    pub boundary_tol: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            model: "bgk".into(),
            u: 0.0,
            n: 20,
            alpha: 0.1,
            quad_points: 0,
            boundary_points: 64,
            tol_zero: 1e-10,
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub kind: String,
    pub order: u32,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            kind: "none".into(),
            order: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncomingSection {
    /// A builtin name (`zero`, `chi_plus`, `chi_minus`, `chi_zero`, `v`,
    /// `v_cubed`) or `file`.
    pub name: String,
    /// Two-column `(v, phi)` text table, used when `name = "file"`.
    pub path: String,
}

impl Default for IncomingSection {
    fn default() -> Self {
        IncomingSection {
            name: "chi_plus".into(),
            path: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub x_samples: Vec<f64>,
    pub v_count: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "runs/out".into(),
            x_samples: vec![0.0],
            v_count: 241,
            v_min: -6.0,
            v_max: 6.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverySection {
    /// Auxiliary solver order; 0 means equal to `run.n`.
    pub aux_n: usize,
    /// Auxiliary cache directory; empty disables caching. The
    /// `HALFSPACE_CACHE_DIR` environment variable overrides this.
    pub cache_dir: String,
}

impl Default for RecoverySection {
    fn default() -> Self {
        RecoverySection {
            aux_n: 0,
            cache_dir: String::new(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run: RunSection::default(),
            filter: FilterSection::default(),
            incoming: IncomingSection::default(),
            output: OutputSection::default(),
            recovery: RecoverySection::default(),
        }
    }
}

/// Flag overrides applied on top of a file (or the defaults).
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Model: bgk or nte
    #[arg(long)]
    pub model: Option<String>,
    /// Bulk velocity u
    #[arg(long)]
    pub u: Option<f64>,
    /// Basis order N (2N+1 functions)
    #[arg(long)]
    pub n: Option<usize>,
    /// Damping strength alpha
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Half-line quadrature points (default 2N+8)
    #[arg(long)]
    pub quad_points: Option<usize>,
    /// Incoming data: builtin name or "file"
    #[arg(long)]
    pub incoming: Option<String>,
    /// Incoming data table path (with --incoming file)
    #[arg(long)]
    pub incoming_path: Option<String>,
    /// Filter kind: none or cosine
    #[arg(long)]
    pub filter: Option<String>,
    /// Filter order p
    #[arg(long)]
    pub filter_order: Option<u32>,
    /// Output directory
    #[arg(long)]
    pub output_dir: Option<String>,
    /// Comma-separated x sample depths
    #[arg(long)]
    pub x_samples: Option<String>,
    /// Velocity grid as count:min:max
    #[arg(long)]
    pub v_grid: Option<String>,
    /// Auxiliary solver order (0 = same as N)
    #[arg(long)]
    pub aux_n: Option<usize>,
    /// Auxiliary cache directory
    #[arg(long)]
    pub cache_dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = &o.model {
            self.run.model = v.clone();
        }
        if let Some(v) = o.u {
            self.run.u = v;
        }
        if let Some(v) = o.n {
            self.run.n = v;
        }
        if let Some(v) = o.alpha {
            self.run.alpha = v;
        }
        if let Some(v) = o.quad_points {
            self.run.quad_points = v;
        }
        if let Some(v) = &o.incoming {
            self.incoming.name = v.clone();
        }
        if let Some(v) = &o.incoming_path {
            self.incoming.path = v.clone();
        }
        if let Some(v) = &o.filter {
            self.filter.kind = v.clone();
        }
        if let Some(v) = o.filter_order {
            self.filter.order = v;
        }
        if let Some(v) = &o.output_dir {
            self.output.dir = v.clone();
        }
        if let Some(v) = &o.x_samples {
            self.output.x_samples = v
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("parsing --x-samples"))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = &o.v_grid {
            let parts: Vec<&str> = v.split(':').collect();
            if parts.len() != 3 {
                bail!("--v-grid expects count:min:max");
            }
            self.output.v_count = parts[0].parse().context("v-grid count")?;
            self.output.v_min = parts[1].parse().context("v-grid min")?;
            self.output.v_max = parts[2].parse().context("v-grid max")?;
        }
        if let Some(v) = o.aux_n {
            self.recovery.aux_n = v;
        }
        if let Some(v) = &o.cache_dir {
            self.recovery.cache_dir = v.clone();
        }
        Ok(())
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        match self.run.model.as_str() {
            "bgk" => Ok(ModelKind::Bgk),
            "nte" => Ok(ModelKind::Nte),
            other => bail!("unknown model '{other}' (expected bgk or nte)"),
        }
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        match self.filter.kind.as_str() {
            "none" => Ok(FilterSpec::none()),
            "cosine" => {
                if self.filter.order == 0 {
                    bail!("filter order must be at least 1");
                }
                Ok(FilterSpec {
                    kind: FilterKind::Cosine,
                    order: self.filter.order,
                })
            }
            other => bail!("unknown filter '{other}' (expected none or cosine)"),
        }
    }

    /// Resolved half-line quadrature size.
    pub fn quad_points(&self) -> usize {
        if self.run.quad_points == 0 {
            2 * self.run.n + 8
        } else {
            self.run.quad_points
        }
    }

    /// Resolved auxiliary order.
    pub fn aux_n(&self) -> usize {
        if self.recovery.aux_n == 0 {
            self.run.n
        } else {
            self.recovery.aux_n
        }
    }

    /// Cache directory after the environment override; `None` disables.
    pub fn cache_dir(&self) -> Option<PathBuf> {
        if let Ok(env) = std::env::var("HALFSPACE_CACHE_DIR") {
            if !env.is_empty() {
                return Some(PathBuf::from(env));
            }
        }
        if self.recovery.cache_dir.is_empty() {
            None
        } else {
            Some(PathBuf::from(&self.recovery.cache_dir))
        }
    }

    pub fn incoming_data(&self) -> Result<IncomingData> {
        match self.incoming.name.as_str() {
            "file" => {
                if self.incoming.path.is_empty() {
                    bail!("incoming.name = \"file\" requires incoming.path");
                }
                let text = std::fs::read_to_string(&self.incoming.path)
                    .with_context(|| format!("reading incoming table {}", self.incoming.path))?;
                let mut points = Vec::new();
                for (ln, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut it = line.split_whitespace();
                    let v: f64 = it
                        .next()
                        .context("missing v column")?
                        .parse()
                        .with_context(|| format!("line {}", ln + 1))?;
                    let phi: f64 = it
                        .next()
                        .context("missing phi column")?
                        .parse()
                        .with_context(|| format!("line {}", ln + 1))?;
                    points.push((v, phi));
                }
                Ok(IncomingData::Table(TabulatedPhi::new(points)?))
            }
            name => match BuiltinPhi::parse(name) {
                Some(b) => Ok(IncomingData::Builtin(b)),
                None => bail!(
                    "unknown incoming data '{name}' (builtins: zero, chi_plus, chi_minus, \
                     chi_zero, v, v_cubed; or \"file\")"
                ),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.model_kind()?;
        if self.run.n < 1 {
            bail!("n must be at least 1");
        }
        if !(self.run.alpha > 0.0) {
            bail!("alpha must be positive");
        }
        if kind == ModelKind::Nte && self.run.u != 0.0 {
            bail!("the nte model requires u = 0 (got {})", self.run.u);
        }
        if self.run.quad_points != 0 && self.run.quad_points < 2 * self.run.n + 8 {
            bail!(
                "quad_points = {} is below the floor 2n + 8 = {}",
                self.run.quad_points,
                2 * self.run.n + 8
            );
        }
        if self.run.boundary_points < 8 {
            bail!("boundary_points must be at least 8");
        }
        if self.output.v_count < 2 || !(self.output.v_min < self.output.v_max) {
            bail!("invalid velocity grid");
        }
        if self.output.x_samples.iter().any(|&x| x < 0.0) {
            bail!("x samples must be nonnegative");
        }
        if kind == ModelKind::Nte && (self.output.v_min < -1.0 || self.output.v_max > 1.0) {
            bail!("nte velocity grid must stay inside [-1, 1]");
        }
        self.filter_spec()?;
        if self.incoming.name != "file" && BuiltinPhi::parse(&self.incoming.name).is_none() {
            bail!("unknown incoming data '{}'", self.incoming.name);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn v_grid(&self) -> Vec<f64> {
        let n = self.output.v_count;
        let (lo, hi) = (self.output.v_min, self.output.v_max);
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}
