//! Adaptive choice of how many mislabeled replicas to inject per challenge point.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{make_split_plan, ChallengePoint, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::nncore::{self, Architecture, Classifier, ModelParams, TrainConfig};
use crate::persist::{KeyHasher, Manifest};
use crate::seed::{derive_seed, pair_index, Stream};

/// Anything that can fit a shadow model to a dataset under a given seed.
pub trait ShadowTrainer: Sync {
    type Model: Classifier;

    fn train(&self, data: &Dataset, seed: u64) -> Result<Self::Model>;

    /// Where the model for `(data, seed)` is persisted, if anywhere.
    fn artifact_ref(&self, _data: &Dataset, _seed: u64) -> Option<String> {
        None
    }
}

/// Trains f32 MLPs, optionally memoizing them on disk by a hash of the
/// training data, architecture, hyperparameters and seed.
#[derive(Debug)]
pub struct MlpTrainer {
    pub arch: Architecture,
    pub config: TrainConfig,
    cache_dir: Option<PathBuf>,
    trained: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl MlpTrainer {
    pub fn new(arch: Architecture, config: TrainConfig) -> Self {
        Self {
            arch,
            config,
            cache_dir: None,
            trained: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Models fitted from scratch by this trainer.
    pub fn trained(&self) -> usize {
        self.trained.load(Ordering::Relaxed)
    }

    /// Models served from the on-disk cache.
    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn cache_key(&self, data: &Dataset, seed: u64) -> Result<String> {
        let config = serde_json::to_string(&self.config.with_seed(seed))?;
        let dims: Vec<String> = self.arch.dims().iter().map(usize::to_string).collect();
        Ok(KeyHasher::new()
            .text("mlp-v1")
            .bytes(&data.content_bytes())
            .text(&dims.join(","))
            .text(&config)
            .finish())
    }

    fn try_cached(path: &Path) -> Option<ModelParams> {
        if !path.exists() {
            return None;
        }
        match ModelParams::load(path) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("ignoring unreadable cached model {}: {e}", path.display());
                None
            }
        }
    }
}

impl ShadowTrainer for MlpTrainer {
    type Model = ModelParams;

    fn train(&self, data: &Dataset, seed: u64) -> Result<ModelParams> {
        let config = self.config.with_seed(seed);
        let Some(dir) = &self.cache_dir else {
            self.trained.fetch_add(1, Ordering::Relaxed);
            return nncore::train(data, &self.arch, &config);
        };
        let key = self.cache_key(data, seed)?;
        let path = dir.join(format!("{key}.manifest"));
        if let Some(model) = Self::try_cached(&path) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(model);
        }
        let model = nncore::train(data, &self.arch, &config)?;
        self.trained.fetch_add(1, Ordering::Relaxed);
        model.save(dir, &key, seed, &key)?;
        Ok(model)
    }

    fn artifact_ref(&self, data: &Dataset, seed: u64) -> Option<String> {
        self.cache_dir.as_ref()?;
        self.cache_key(data, seed).ok().map(|k| format!("{k}.manifest"))
    }
}

/// Challenge points together with the wrong label each one is poisoned with.
#[derive(Clone, Debug, PartialEq)]
pub struct ChallengeSet {
    points: Vec<ChallengePoint>,
    poisoned_labels: Vec<usize>,
}

impl ChallengeSet {
    pub fn new(points: Vec<ChallengePoint>, poisoned_labels: Vec<usize>) -> Result<Self> {
        if points.len() != poisoned_labels.len() {
            return Err(Error::Misaligned(format!(
                "{} challenge points but {} poisoned labels",
                points.len(),
                poisoned_labels.len()
            )));
        }
        for (p, &yp) in points.iter().zip(&poisoned_labels) {
            if yp == p.y {
                return Err(Error::InvalidInput(format!(
                    "poisoned label for challenge {} equals its true label {yp}",
                    p.index
                )));
            }
        }
        Ok(Self { points, poisoned_labels })
    }

    /// Poisons each point with `(y + 1) mod num_classes`.
    pub fn with_next_label(points: Vec<ChallengePoint>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig("poisoning needs at least two classes".into()));
        }
        let labels = points.iter().map(|p| (p.y + 1) % num_classes).collect();
        Self::new(points, labels)
    }

    /// Draws every point of `data` at `indices`.
    pub fn from_dataset(data: &Dataset, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::InvalidInput(format!("challenge index {i} out of range")));
        }
        let points = indices.iter().map(|&i| ChallengePoint::from_dataset(data, i)).collect();
        Self::with_next_label(points, data.num_classes())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ChallengePoint] {
        &self.points
    }

    pub fn poisoned_labels(&self) -> &[usize] {
        &self.poisoned_labels
    }

    pub fn indices(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.index).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoisonConfig {
    /// Stop poisoning a point once its mean OUT confidence on the true label
    /// falls to this level.
    pub t_p: f64,
    /// OUT models per point; the multi-point search trains `2m` per iteration.
    pub m: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl Default for PoisonConfig {
    fn default() -> Self {
        Self {
            t_p: 0.15,
            m: 8,
            k_max: 6,
            seed: 0,
        }
    }
}

impl PoisonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_p > 0.0 && self.t_p <= 1.0) {
            return Err(Error::InvalidConfig(format!("t_p must lie in (0, 1], got {}", self.t_p)));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        Ok(())
    }

    /// Shadow models the multi-point search trains when nothing freezes early.
    pub fn max_models(&self) -> usize {
        2 * (self.k_max + 1) * self.m
    }

    pub fn model_seed(&self, iteration: usize, model: usize) -> u64 {
        derive_seed(self.seed, Stream::ShadowModel, pair_index(iteration as u64, model as u64))
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::ShadowSplit, 0)
    }
}

fn mean_confidence<M: Classifier>(models: &[&M], x: &[f32], y: usize) -> Result<f64> {
    let mut sum = 0.0;
    for m in models {
        sum += m.confidence(x, y)?;
    }
    Ok(sum / models.len() as f64)
}

/// Replica count for a single point that is absent from `d_adv`.
pub fn adapt_poison_single<T: ShadowTrainer>(
    challenge: &ChallengePoint,
    poisoned_label: usize,
    d_adv: &Dataset,
    cfg: &PoisonConfig,
    trainer: &T,
) -> Result<usize> {
    cfg.validate()?;
    if poisoned_label == challenge.y {
        return Err(Error::InvalidInput("poisoned label equals the true label".into()));
    }
    if d_adv.find(&challenge.x, challenge.y).is_some() {
        return Err(Error::ChallengeInDataset(challenge.index));
    }
    for k in 0..=cfg.k_max {
        let mut data = d_adv.clone();
        for _ in 0..k {
            data.push(&challenge.x, poisoned_label)?;
        }
        let models = (0..cfg.m)
            .into_par_iter()
            .map(|j| trainer.train(&data, cfg.model_seed(k, j)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&T::Model> = models.iter().collect();
        let mu = mean_confidence(&refs, &challenge.x, challenge.y)?;
        log::debug!("single-point poisoning: k={k} mu={mu:.4}");
        if mu <= cfg.t_p {
            return Ok(k);
        }
    }
    Ok(cfg.k_max)
}

/// A shadow model from the multi-point search, labeled by the iteration that
/// trained it and the split row it was trained on.
#[derive(Clone, Debug)]
pub struct TaggedModel<M> {
    pub iteration: usize,
    pub split_row: usize,
    pub model: M,
    pub artifact: Option<String>,
}

#[derive(Clone, Debug)]
pub struct PoisonPlan<M> {
    pub replica_counts: Vec<usize>,
    /// Index of the last iteration executed; `0` means only the clean round ran.
    pub iterations_run: usize,
    pub split: SplitPlan,
    pub models: Vec<TaggedModel<M>>,
    /// `mu_trace[k][i]` is point `i`'s mean OUT confidence at iteration `k`,
    /// or `None` if it was already frozen.
    pub mu_trace: Vec<Vec<Option<f64>>>,
    pub frozen: Vec<bool>,
}

impl<M: Classifier> PoisonPlan<M> {
    pub fn models_trained(&self) -> usize {
        self.models.len()
    }

    /// Models of one iteration, ordered by split row.
    pub fn iteration_models(&self, iteration: usize) -> Vec<&M> {
        self.models.iter().filter(|t| t.iteration == iteration).map(|t| &t.model).collect()
    }

    /// Clean iteration-0 models that did and did not train on challenge `i`.
    pub fn clean_in_out(&self, i: usize) -> (Vec<&M>, Vec<&M>) {
        let clean = self.iteration_models(0);
        let column = self.split.challenge_indices()[i];
        let inside = self.split.in_models(column).into_iter().map(|j| clean[j]).collect();
        let outside = self.split.out_models(column).into_iter().map(|j| clean[j]).collect();
        (inside, outside)
    }

    pub fn poisoned_training_set(&self, base: &Dataset, challenges: &ChallengeSet) -> Result<Dataset> {
        build_poisoned_training_set(base, &self.replica_counts, challenges)
    }

    /// Writes a manifest with counts, labels, confidence trace, split rows and
    /// the persisted location of every model that has one.
    pub fn save_manifest(&self, path: &Path, challenges: &ChallengeSet, cfg: &PoisonConfig) -> Result<()> {
        let mut m = Manifest::new("poison-plan-v1");
        m.set("t_p", cfg.t_p);
        m.set("m", cfg.m);
        m.set("k_max", cfg.k_max);
        m.set("seed", cfg.seed);
        m.set("iterations_run", self.iterations_run);
        m.set("models_trained", self.models_trained());
        m.set("challenge_indices", join(&challenges.indices()));
        m.set("poisoned_labels", join(challenges.poisoned_labels()));
        m.set("replica_counts", join(&self.replica_counts));
        for (k, row) in self.mu_trace.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}")))
                .collect();
            m.set(&format!("mu.{k:02}"), cells.join(","));
        }
        for (j, row) in self.split.to_rows().iter().enumerate() {
            m.set(&format!("split.{j:03}"), row);
        }
        for t in &self.models {
            if let Some(file) = &t.artifact {
                m.set(&format!("model.{:02}.{:03}", t.iteration, t.split_row), file);
            }
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        m.write(path)
    }
}

/// Replica counts and split plan read back from a poison-plan manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedPoisonPlan {
    pub replica_counts: Vec<usize>,
    pub poisoned_labels: Vec<usize>,
    pub iterations_run: usize,
    pub split: SplitPlan,
}

pub fn load_poison_manifest(path: &Path) -> Result<SavedPoisonPlan> {
    let m = Manifest::read(path)?;
    m.expect_format("poison-plan-v1")?;
    let list = |key: &str| -> Result<Vec<usize>> {
        let v = m.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad list in `{key}`"),
            })
    };
    let rows: Vec<String> = m
        .entries()
        .filter(|(k, _)| k.starts_with("split."))
        .map(|(_, v)| v.to_string())
        .collect();
    Ok(SavedPoisonPlan {
        replica_counts: list("replica_counts")?,
        poisoned_labels: list("poisoned_labels")?,
        iterations_run: m.parse("iterations_run")?,
        split: SplitPlan::from_rows(&rows, list("challenge_indices")?)?,
    })
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Replica counts for every point of `challenges`, which must all be rows of
/// `d_adv`, sharing `2m` shadow models per iteration.
pub fn adapt_poison_multi<T: ShadowTrainer>(
    challenges: &ChallengeSet,
    d_adv: &Dataset,
    cfg: &PoisonConfig,
    trainer: &T,
) -> Result<PoisonPlan<T::Model>> {
    cfg.validate()?;
    if challenges.is_empty() {
        return Err(Error::EmptyInput("challenge set"));
    }
    for p in challenges.points() {
        if p.index >= d_adv.len() || d_adv.row(p.index) != p.x.as_slice() || d_adv.label(p.index) != p.y {
            return Err(Error::InvalidInput(format!(
                "challenge {} is not the matching row of the attacker dataset",
                p.index
            )));
        }
    }
    let num_models = 2 * cfg.m;
    let split = make_split_plan(d_adv.len(), &challenges.indices(), num_models, cfg.split_seed())?;
    let out_models: Vec<Vec<usize>> = challenges
        .points()
        .iter()
        .map(|p| split.out_models(p.index))
        .collect();
    assert!(out_models.iter().all(|o| o.len() == cfg.m), "split plan is not balanced");
    let subsets = (0..num_models)
        .map(|j| d_adv.subset(&split.training_indices(j)))
        .collect::<Result<Vec<_>>>()?;

    let n = challenges.len();
    let mut counts = vec![0usize; n];
    let mut frozen = vec![false; n];
    let mut models = Vec::new();
    let mut mu_trace = Vec::new();
    let mut iterations_run = 0;
    for k in 0..=cfg.k_max {
        iterations_run = k;
        let poison = build_poisoned_training_set(&Dataset::empty_like(d_adv), &counts, challenges)?;
        let trained = subsets
            .par_iter()
            .enumerate()
            .map(|(j, subset)| {
                let mut data = subset.clone();
                data.extend(&poison)?;
                let seed = cfg.model_seed(k, j);
                Ok((trainer.train(&data, seed)?, trainer.artifact_ref(&data, seed)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut row = vec![None; n];
        for (i, p) in challenges.points().iter().enumerate() {
            if frozen[i] {
                continue;
            }
            let outs: Vec<&T::Model> = out_models[i].iter().map(|&j| &trained[j].0).collect();
            let mu = mean_confidence(&outs, &p.x, p.y)?;
            row[i] = Some(mu);
            if mu <= cfg.t_p {
                frozen[i] = true;
            } else if k < cfg.k_max {
                counts[i] += 1;
            }
        }
        log::debug!(
            "multi-point poisoning: iteration {k}, {} of {n} points frozen",
            frozen.iter().filter(|&&b| b).count()
        );
        mu_trace.push(row);
        models.extend(trained.into_iter().enumerate().map(|(j, (model, artifact))| TaggedModel {
            iteration: k,
            split_row: j,
            model,
            artifact,
        }));
        if frozen.iter().all(|&b| b) {
            break;
        }
    }
    Ok(PoisonPlan {
        replica_counts: counts,
        iterations_run,
        split,
        models,
        mu_trace,
        frozen,
    })
}

/// `base` followed by `counts[i]` copies of `(x_i, y'_i)`, in ascending
/// challenge index with each point's replicas contiguous.
pub fn build_poisoned_training_set(base: &Dataset, counts: &[usize], challenges: &ChallengeSet) -> Result<Dataset> {
    if counts.len() != challenges.len() {
        return Err(Error::Misaligned(format!(
            "{} replica counts for {} challenge points",
            counts.len(),
            challenges.len()
        )));
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| challenges.points()[i].index);
    let mut out = base.clone();
    for i in order {
        let p = &challenges.points()[i];
        for _ in 0..counts[i] {
            out.push(&p.x, challenges.poisoned_labels()[i])?;
        }
    }
    Ok(out)
}
