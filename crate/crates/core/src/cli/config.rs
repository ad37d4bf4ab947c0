use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::model::{ModelConfig, PulseConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub softening: f64,
    pub coulomb_strength: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            softening: ModelConfig::DEFAULT.softening,
            coulomb_strength: ModelConfig::DEFAULT.coulomb_strength,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Half-length `l` of the box `[-l, l)`.
    pub l: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            l: UniformGrid::DEFAULT.half_length(),
            n: UniformGrid::DEFAULT.len(),
        }
    }
}

/// Time stepping, shared by the grid reference and the Rothe propagation so
/// their snapshots line up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotheSection {
    pub h: f64,
    pub t_end: f64,
    pub epsilon: f64,
    pub max_additions: usize,
}

impl Default for RotheSection {
    fn default() -> Self {
        RotheSection {
            h: 1e-3,
            t_end: 100.0,
            epsilon: 1e-7,
            max_additions: 5,
        }
    }
}

/// Initial LCG fit to the grid ground state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            k: 4,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Time between snapshots.
    pub snapshot_interval: f64,
    /// Time between LCG checkpoints.
    pub checkpoint_interval: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            snapshot_interval: 1.0,
            checkpoint_interval: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub pulse: PulseConfig,
    pub grid: GridSection,
    pub rothe: RotheSection,
    pub fit: FitSection,
    pub output: OutputSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub h: Option<f64>,
    pub epsilon: Option<f64>,
    pub t_end: Option<f64>,
    pub grid_n: Option<usize>,
    pub grid_l: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.output.dir = v.clone();
        }
        if let Some(v) = o.seed {
            self.fit.seed = v;
        }
        if let Some(v) = o.h {
            self.rothe.h = v;
        }
        if let Some(v) = o.epsilon {
            self.rothe.epsilon = v;
        }
        if let Some(v) = o.t_end {
            self.rothe.t_end = v;
        }
        if let Some(v) = o.grid_n {
            self.grid.n = v;
        }
        if let Some(v) = o.grid_l {
            self.grid.l = v;
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            pulse: self.pulse,
            softening: self.model.softening,
            coulomb_strength: self.model.coulomb_strength,
        }
    }

    pub fn grid(&self) -> Result<UniformGrid> {
        UniformGrid::new(self.grid.l, self.grid.n).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn steps(&self) -> Result<usize> {
        crate::grid::step_count(self.rothe.h, self.rothe.t_end)
    }

    pub fn snapshot_every(&self) -> Result<usize> {
        interval_steps("snapshot_interval", self.output.snapshot_interval, self.rothe.h)
    }

    pub fn checkpoint_every(&self) -> Result<usize> {
        interval_steps("checkpoint_interval", self.output.checkpoint_interval, self.rothe.h)
    }

    /// Checks everything a command could trip over before any file is written.
    pub fn validate(&self) -> Result<()> {
        let model = self.model();
        model
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.grid()?;
        let r = &self.rothe;
        if !(r.h > 0.0) || !r.h.is_finite() {
            return Err(Error::Config(format!("rothe.h must be a finite number > 0, got {}", r.h)));
        }
        if !(r.epsilon > 0.0) || !r.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "rothe.epsilon must be a finite number > 0, got {}",
                r.epsilon
            )));
        }
        self.steps()?;
        self.snapshot_every()?;
        self.checkpoint_every()?;
        if self.fit.k == 0 {
            return Err(Error::Config("fit.k must be >= 1".into()));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(Error::Config("output.dir must not be empty".into()));
        }
        Ok(())
    }
}

fn interval_steps(name: &str, interval: f64, h: f64) -> Result<usize> {
    if !(interval > 0.0) || !interval.is_finite() {
        return Err(Error::Config(format!("output.{name} must be > 0, got {interval}")));
    }
    let n = (interval / h).round();
    if n < 1.0 || (n * h - interval).abs() > 1e-9 * interval.max(1.0) {
        return Err(Error::Config(format!(
            "output.{name}={interval} is not a positive multiple of h={h}"
        )));
    }
    Ok(n as usize)
}
