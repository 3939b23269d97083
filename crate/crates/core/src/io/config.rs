//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! nx = 64
//! ny = 64
//!
//! [physics]
//! model = "B"
//! beta = 10.0
//!
//! [scheme]
//! dt = 1e-3
//! max_steps = 5000
//!
//! [sweep]
//! beta = [1e-3, 1.0, 10.0]
//! ```
//!
//! Physics keys that are left out take the defaults of the chosen model.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{LinearSolver, SchemeConfig};
use crate::model::{Edge, Grid, ModelKind, PhysicalParams};

pub const DEFAULT_REPORT_INTERVAL: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_cells")]
    pub nx: usize,
    #[serde(default = "default_cells")]
    pub ny: usize,
    /// `[x_min, x_max, y_min, y_max]`.
    #[serde(default = "default_bounds")]
    pub bounds: [f64; 4],
    #[serde(default)]
    pub gamma_edge: Edge,
}

fn default_cells() -> usize {
    64
}

fn default_bounds() -> [f64; 4] {
    [-1.0, 1.0, -1.0, 1.0]
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: default_cells(),
            ny: default_cells(),
            bounds: default_bounds(),
            gamma_edge: Edge::Bottom,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.bounds, self.gamma_edge)
    }
}

/// One value on a sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Text(s) => f.write_str(s),
        }
    }
}

/// Fully resolved settings for one run, or the template of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FileConfig", into = "FileConfig")]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: ModelKind,
    pub params: PhysicalParams,
    pub scheme: SchemeConfig,
    pub report_interval: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Axis name to values, kept in key order so point numbering is stable.
    pub sweep: BTreeMap<String, Vec<SweepValue>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            model: ModelKind::A,
            params: PhysicalParams::model_a(),
            scheme: SchemeConfig::default(),
            report_interval: DEFAULT_REPORT_INTERVAL,
            seed: 0,
            out_dir: PathBuf::from("out"),
            sweep: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Rejects settings that cannot produce a run, before anything touches disk.
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.scheme.validate()?;
        if self.report_interval == 0 {
            return Err(Error::Config("report_interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one sweep coordinate.
    pub fn with_axis(mut self, name: &str, value: &SweepValue) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("sweep axis `{name}`: {what}, got `{value}`"));
        let number = || match value {
            SweepValue::Number(v) => Ok(*v),
            SweepValue::Text(_) => Err(bad("expected a number")),
        };
        let count = || {
            let v = number()?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(bad("expected a nonnegative integer"));
            }
            Ok(v as u64)
        };
        match name {
            "model" => {
                self.model = match value {
                    SweepValue::Text(s) => s.parse()?,
                    SweepValue::Number(_) => return Err(bad("expected a model name")),
                }
            }
            "seed" => self.seed = count()?,
            "dt" => self.scheme.dt = number()?,
            "order" => self.scheme.order = u8::try_from(count()?).map_err(|_| bad("order out of range"))?,
            "max_steps" => self.scheme.max_steps = count()?,
            "n" => {
                let n = count()? as usize;
                self.grid.nx = n;
                self.grid.ny = n;
            }
            "nx" => self.grid.nx = count()? as usize,
            "ny" => self.grid.ny = count()? as usize,
            _ => {
                let mut table = toml::Table::try_from(&self.params).map_err(|e| Error::Config(e.to_string()))?;
                if !table.contains_key(name) {
                    return Err(Error::Config(format!("unknown sweep axis `{name}`")));
                }
                table.insert(name.to_owned(), toml::Value::Float(number()?));
                self.params = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            }
        }
        Ok(self)
    }

    /// Cartesian product of the sweep axes, last axis varying fastest.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        if self.sweep.is_empty() {
            return Err(Error::Config("[sweep] has no axes".into()));
        }
        if let Some((name, _)) = self.sweep.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Config(format!("sweep axis `{name}` has no values")));
        }
        let mut points: Vec<Vec<(String, SweepValue)>> = vec![Vec::new()];
        for (name, values) in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((name.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .enumerate()
            .map(|(index, coords)| {
                let mut config = self.clone();
                config.sweep.clear();
                for (name, value) in &coords {
                    config = config.with_axis(name, value)?;
                }
                Ok(SweepPoint { index, coords, config })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub coords: Vec<(String, SweepValue)>,
    pub config: RunConfig,
}

impl SweepPoint {
    /// Subdirectory name, e.g. `p001_beta=1`.
    pub fn dir_name(&self) -> String {
        let mut name = format!("p{:03}", self.index);
        for (k, v) in &self.coords {
            name.push_str(&format!("_{k}={v}"));
        }
        name
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    grid: GridSpec,
    physics: toml::Table,
    #[serde(default)]
    scheme: SchemeSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    sweep: BTreeMap<String, Vec<SweepValue>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SchemeSection {
    order: u8,
    dt: f64,
    linear_solver: LinearSolver,
    solver_tol: f64,
    max_steps: u64,
    snapshot_times: Vec<f64>,
    report_interval: u64,
    seed: u64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let s = SchemeConfig::default();
        Self {
            order: s.order,
            dt: s.dt,
            linear_solver: s.linear_solver,
            solver_tol: s.solver_tol,
            max_steps: s.max_steps,
            snapshot_times: s.snapshot_times,
            report_interval: DEFAULT_REPORT_INTERVAL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    #[serde(default = "default_out_dir")]
    dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

impl TryFrom<FileConfig> for RunConfig {
    type Error = Error;

    fn try_from(mut f: FileConfig) -> Result<Self> {
        let model: ModelKind = match f.physics.remove("model") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => return Err(Error::Config(format!("physics.model must be a string, got {other}"))),
            None => return Err(Error::Config("physics.model is required".into())),
        };
        let mut table =
            toml::Table::try_from(PhysicalParams::defaults_for(model)).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in f.physics {
            // Integers are accepted wherever a float is expected.
            let v = match v {
                toml::Value::Integer(i) => toml::Value::Float(i as f64),
                v => v,
            };
            table.insert(k, v);
        }
        let params: PhysicalParams = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("[physics]: {e}")))?;
        let s = f.scheme;
        Ok(Self {
            grid: f.grid,
            model,
            params,
            scheme: SchemeConfig {
                order: s.order,
                dt: s.dt,
                linear_solver: s.linear_solver,
                solver_tol: s.solver_tol,
                max_steps: s.max_steps,
                snapshot_times: s.snapshot_times,
            },
            report_interval: s.report_interval,
            seed: s.seed,
            out_dir: f.output.dir,
            sweep: f.sweep,
        })
    }
}

impl From<RunConfig> for FileConfig {
    fn from(c: RunConfig) -> Self {
        let mut physics = toml::Table::new();
        physics.insert("model".into(), toml::Value::String(c.model.to_string()));
        if let Ok(toml::Value::Table(t)) = toml::Value::try_from(&c.params) {
            physics.extend(t);
        }
        Self {
            grid: c.grid,
            physics,
            scheme: SchemeSection {
                order: c.scheme.order,
                dt: c.scheme.dt,
                linear_solver: c.scheme.linear_solver,
                solver_tol: c.scheme.solver_tol,
                max_steps: c.scheme.max_steps,
                snapshot_times: c.scheme.snapshot_times,
                report_interval: c.report_interval,
                seed: c.seed,
            },
            output: OutputSection { dir: c.out_dir },
            sweep: c.sweep,
        }
    }
}
