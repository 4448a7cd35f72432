use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::AttackKind;
use crate::datagen::Modality;
use crate::error::{Error, Result};
use crate::nncore::{Architecture, TrainConfig};
use crate::persist::KeyHasher;
use crate::poisoner::PoisonConfig;

/// Where the challenger's population comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    GaussianMixture {
        num_classes: usize,
        dim: usize,
        n_per_class: usize,
        class_sep: f64,
        /// Held-out rows per class used only to measure target accuracy.
        test_per_class: usize,
    },
    BinaryTabular {
        num_classes: usize,
        dim: usize,
        n_per_class: usize,
        flip_noise: f64,
        test_per_class: usize,
    },
    Csv {
        path: PathBuf,
        /// Fraction of rows held out for accuracy measurement.
        test_fraction: f64,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::GaussianMixture {
            num_classes: 10,
            dim: 20,
            n_per_class: 60,
            class_sep: 4.5,
            test_per_class: 100,
        }
    }
}

impl DatasetSpec {
    pub fn default_modality(&self) -> Modality {
        match self {
            DatasetSpec::BinaryTabular { .. } => Modality::Binary,
            _ => Modality::Continuous,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("dataset: {msg}")));
        match *self {
            DatasetSpec::GaussianMixture { num_classes, dim, n_per_class, class_sep, test_per_class } => {
                if num_classes < 2 || dim == 0 || n_per_class == 0 || test_per_class == 0 {
                    return bad("needs at least two classes and positive dim and row counts");
                }
                if !(class_sep > 0.0 && class_sep.is_finite()) {
                    return bad("class_sep must be positive");
                }
            }
            DatasetSpec::BinaryTabular { num_classes, dim, n_per_class, flip_noise, test_per_class } => {
                if num_classes < 2 || dim == 0 || n_per_class == 0 || test_per_class == 0 {
                    return bad("needs at least two classes and positive dim and row counts");
                }
                if !(0.0..0.5).contains(&flip_noise) {
                    return bad("flip_noise must lie in [0, 0.5)");
                }
            }
            DatasetSpec::Csv { test_fraction, .. } => {
                if !(test_fraction > 0.0 && test_fraction < 1.0) {
                    return bad("test_fraction must lie in (0, 1)");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![128] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborhoodConfig {
    /// KL admission threshold on both the IN and OUT fits.
    pub t_nb: f64,
    /// Neighbors kept per challenge point.
    pub size: usize,
    /// Candidates generated per challenge point before filtering.
    pub pool_size: usize,
    /// Gaussian jitter std (continuous) or bit-flip probability (binary).
    pub noise_scale: f64,
    /// Defaults to the dataset's natural modality.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            t_nb: 0.75,
            size: 64,
            pool_size: 256,
            noise_scale: 0.2,
            modality: None,
        }
    }
}

impl NeighborhoodConfig {
    fn validate(&self) -> Result<()> {
        if !(self.t_nb >= 0.0 && self.t_nb.is_finite()) {
            return Err(Error::InvalidConfig("neighborhood.t_nb must be non-negative".into()));
        }
        if self.size == 0 || self.pool_size == 0 {
            return Err(Error::InvalidConfig("neighborhood size and pool_size must be positive".into()));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig("neighborhood.noise_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Everything that determines a privacy-game run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Targets per run; each challenge point is IN for exactly half of them.
    pub num_target_models: usize,
    pub num_challenge_points: usize,
    pub attacks: Vec<AttackKind>,
    /// Poison each challenge point with its own single-point search instead of
    /// the shared multi-point search.
    pub game_strict: bool,
    pub out_dir: PathBuf,
    /// Model cache; `<out_dir>/cache` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub poison: PoisonConfig,
    pub neighborhood: NeighborhoodConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_target_models: 16,
            num_challenge_points: 32,
            attacks: vec![AttackKind::Chameleon, AttackKind::Gap],
            game_strict: false,
            out_dir: PathBuf::from("chameleon-run"),
            cache_dir: None,
            dataset: DatasetSpec::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            poison: PoisonConfig::default(),
            neighborhood: NeighborhoodConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// 64 targets and 500 challenge points.
    pub fn full_scale(mut self) -> Self {
        self.num_target_models = 64;
        self.num_challenge_points = 500;
        if let DatasetSpec::GaussianMixture { n_per_class, .. } | DatasetSpec::BinaryTabular { n_per_class, .. } =
            &mut self.dataset
        {
            *n_per_class = (*n_per_class).max(200);
        }
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let DatasetSpec::Csv { path: csv, .. } = &mut cfg.dataset {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_target_models < 2 || self.num_target_models % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "num_target_models must be even and at least 2, got {}",
                self.num_target_models
            )));
        }
        if self.num_challenge_points == 0 {
            return Err(Error::InvalidConfig("num_challenge_points must be positive".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::InvalidConfig("attacks must name at least one attack".into()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        self.dataset.validate()?;
        self.train.validate().map_err(as_config)?;
        self.poison.validate()?;
        self.neighborhood.validate()
    }

    pub fn modality(&self) -> Modality {
        self.neighborhood.modality.unwrap_or_else(|| self.dataset.default_modality())
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture::new(input_dim, self.model.hidden.clone(), num_classes)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    /// Hash of every setting that can change results; output locations are excluded.
    pub fn config_hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.cache_dir = None;
        Ok(KeyHasher::new().text(&canonical.to_toml_string()?).finish())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidConfig(_) => e,
        other => Error::InvalidConfig(other.to_string()),
    }
}
