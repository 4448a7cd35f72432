use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;

use super::config::{DatasetSpec, ExperimentConfig};
use super::cost::{account_cost, CostReport};
use super::manifest::RunManifest;
use crate::attack::{self, AttackKind, LabelOnly, ScoreRecord};
use crate::datagen::{self, make_split_plan, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::neighborhood::{self, NeighborhoodSet, LOGIT_EPS};
use crate::nncore::{Classifier, ModelParams};
use crate::poisoner::{
    adapt_poison_multi, adapt_poison_single, build_poisoned_training_set, ChallengeSet, MlpTrainer, PoisonConfig,
    ShadowTrainer,
};
use crate::seed::{self, derive_seed, Stream};

/// How replica counts are chosen for the challenge points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Poisoning {
    /// Shared multi-point search.
    Adaptive,
    /// Single-point search run separately for every challenge point.
    Strict,
    /// The same fixed count for every point.
    Static(usize),
}

/// The challenger's population, its held-out rows and the challenge points.
#[derive(Clone, Debug)]
pub struct GameData {
    pub pool: Dataset,
    pub test: Dataset,
    pub challenges: ChallengeSet,
}

/// Results of one privacy game.
#[derive(Clone, Debug)]
pub struct GameOutcome {
    pub reports: Vec<MetricReport>,
    pub records: Vec<ScoreRecord>,
    pub replica_counts: Vec<usize>,
    pub cost: CostReport,
    /// Mean held-out accuracy of the poisoned targets.
    pub target_accuracy: f64,
    /// Mean held-out accuracy of the unpoisoned targets, when they were trained.
    pub clean_target_accuracy: Option<f64>,
    pub out_dir: PathBuf,
}

impl GameOutcome {
    pub fn report(&self, attack: AttackKind) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.attack == attack.name())
    }
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<GameData> {
    let (pool, test) = match &cfg.dataset {
        DatasetSpec::GaussianMixture { num_classes, dim, n_per_class, class_sep, test_per_class } => {
            let all = datagen::gen_gaussian_mixture(
                *num_classes,
                *dim,
                n_per_class + test_per_class,
                *class_sep,
                derive_seed(cfg.seed, Stream::Population, 0),
            )?;
            split_grouped(&all, *num_classes, *n_per_class, *test_per_class)?
        }
        DatasetSpec::BinaryTabular { num_classes, dim, n_per_class, flip_noise, test_per_class } => {
            let all = datagen::gen_binary_tabular(
                *num_classes,
                *dim,
                n_per_class + test_per_class,
                *flip_noise,
                derive_seed(cfg.seed, Stream::Population, 0),
            )?;
            split_grouped(&all, *num_classes, *n_per_class, *test_per_class)?
        }
        DatasetSpec::Csv { path, test_fraction } => {
            let all = Dataset::from_csv(File::open(path)?)?;
            let mut order: Vec<usize> = (0..all.len()).collect();
            order.shuffle(&mut seed::stream_rng(cfg.seed, Stream::HeldOut, 0));
            let n_test = ((all.len() as f64) * test_fraction).round() as usize;
            if n_test == 0 || n_test >= all.len() {
                return Err(Error::InvalidConfig(format!(
                    "test_fraction {test_fraction} leaves an empty split of {} rows",
                    all.len()
                )));
            }
            let (test_rows, pool_rows) = order.split_at(n_test);
            let mut pool_rows = pool_rows.to_vec();
            let mut test_rows = test_rows.to_vec();
            pool_rows.sort_unstable();
            test_rows.sort_unstable();
            (all.subset(&pool_rows)?, all.subset(&test_rows)?)
        }
    };
    if cfg.num_challenge_points > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "{} challenge points requested from a pool of {}",
            cfg.num_challenge_points,
            pool.len()
        )));
    }
    let mut rng = seed::stream_rng(cfg.seed, Stream::Challenges, 0);
    let mut picked = index::sample(&mut rng, pool.len(), cfg.num_challenge_points).into_vec();
    picked.sort_unstable();
    let challenges = ChallengeSet::from_dataset(&pool, &picked)?;
    Ok(GameData { pool, test, challenges })
}

/// Splits class-grouped rows into the first `n_pool` and the next `n_test` of each class.
fn split_grouped(all: &Dataset, num_classes: usize, n_pool: usize, n_test: usize) -> Result<(Dataset, Dataset)> {
    let per = n_pool + n_test;
    let pool: Vec<usize> = (0..num_classes).flat_map(|c| c * per..c * per + n_pool).collect();
    let test: Vec<usize> = (0..num_classes).flat_map(|c| c * per + n_pool..(c + 1) * per).collect();
    Ok((all.subset(&pool)?, all.subset(&test)?))
}

pub fn accuracy<M: Classifier>(model: &M, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for (x, y) in data.iter() {
        correct += usize::from(model.predict(x)?.label == y);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Output of the shadow stage: clean models for neighborhoods plus the
/// replica counts that the targets will be poisoned with.
struct ShadowStage {
    split: SplitPlan,
    clean: Vec<ModelParams>,
    counts: Vec<usize>,
    shadow_models: usize,
    iterations_run: Option<usize>,
}

fn train_clean_shadows(
    data: &GameData,
    poison: &PoisonConfig,
    trainer: &MlpTrainer,
) -> Result<(SplitPlan, Vec<ModelParams>)> {
    let split = make_split_plan(data.pool.len(), &data.challenges.indices(), 2 * poison.m, poison.split_seed())?;
    let models = (0..split.num_models())
        .into_par_iter()
        .map(|j| trainer.train(&data.pool.subset(&split.training_indices(j))?, poison.model_seed(0, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok((split, models))
}

fn shadow_stage(
    cfg: &ExperimentConfig,
    poisoning: Poisoning,
    data: &GameData,
    trainer: &MlpTrainer,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<ShadowStage> {
    let poison = PoisonConfig {
        seed: cfg.seed,
        ..cfg.poison.clone()
    };
    let n = data.challenges.len();
    match poisoning {
        Poisoning::Adaptive => {
            let plan = adapt_poison_multi(&data.challenges, &data.pool, &poison, trainer)?;
            let path = out_dir.join("poison_plan.manifest");
            plan.save_manifest(&path, &data.challenges, &poison)?;
            manifest.add_artifact("poison_plan", out_dir, &path)?;
            let cost = account_cost(&plan, &poison, 0);
            Ok(ShadowStage {
                clean: plan.iteration_models(0).into_iter().cloned().collect(),
                split: plan.split,
                counts: plan.replica_counts,
                shadow_models: cost.shadow_models,
                iterations_run: Some(plan.iterations_run),
            })
        }
        Poisoning::Static(k) => {
            let (split, clean) = train_clean_shadows(data, &poison, trainer)?;
            Ok(ShadowStage {
                shadow_models: clean.len(),
                split,
                clean,
                counts: vec![k; n],
                iterations_run: None,
            })
        }
        Poisoning::Strict => {
            let (split, clean) = train_clean_shadows(data, &poison, trainer)?;
            let counts = data
                .challenges
                .points()
                .iter()
                .zip(data.challenges.poisoned_labels())
                .map(|(p, &yp)| {
                    let point_cfg = PoisonConfig {
                        seed: derive_seed(cfg.seed, Stream::StrictShadow, p.index as u64),
                        ..poison.clone()
                    };
                    let d_adv = data.pool.without(&[p.index])?;
                    adapt_poison_single(p, yp, &d_adv, &point_cfg, trainer)
                })
                .collect::<Result<Vec<_>>>()?;
            let single: usize = counts.iter().map(|k| (k + 1) * poison.m).sum();
            Ok(ShadowStage {
                shadow_models: clean.len() + single,
                split,
                clean,
                counts,
                iterations_run: None,
            })
        }
    }
}

fn neighborhood_stage(
    cfg: &ExperimentConfig,
    data: &GameData,
    shadows: &ShadowStage,
) -> Result<Vec<NeighborhoodSet>> {
    let nb = &cfg.neighborhood;
    let modality = cfg.modality();
    data.challenges
        .points()
        .par_iter()
        .map(|p| {
            let candidates = datagen::gen_neighbors(
                &p.x,
                p.y,
                modality,
                nb.pool_size,
                nb.noise_scale,
                derive_seed(cfg.seed, Stream::Neighbors, p.index as u64),
            )?;
            let inside: Vec<&ModelParams> = shadows.split.in_models(p.index).into_iter().map(|j| &shadows.clean[j]).collect();
            let outside: Vec<&ModelParams> =
                shadows.split.out_models(p.index).into_iter().map(|j| &shadows.clean[j]).collect();
            neighborhood::select_neighborhood(&p.x, p.y, &candidates, &inside, &outside, nb.t_nb, nb.size, LOGIT_EPS)
        })
        .collect()
}

struct Targets {
    split: SplitPlan,
    poisoned: Vec<ModelParams>,
    clean: Option<Vec<ModelParams>>,
}

fn target_stage(cfg: &ExperimentConfig, data: &GameData, counts: &[usize], trainer: &MlpTrainer) -> Result<Targets> {
    let split = make_split_plan(
        data.pool.len(),
        &data.challenges.indices(),
        cfg.num_target_models,
        derive_seed(cfg.seed, Stream::TargetSplit, 0),
    )?;
    let poison = build_poisoned_training_set(&Dataset::empty_like(&data.pool), counts, &data.challenges)?;
    let fit = |with_poison: bool| -> Result<Vec<ModelParams>> {
        (0..cfg.num_target_models)
            .into_par_iter()
            .map(|j| {
                let mut d = data.pool.subset(&split.training_indices(j))?;
                if with_poison {
                    d.extend(&poison)?;
                }
                trainer.train(&d, derive_seed(cfg.seed, Stream::TargetModel, j as u64))
            })
            .collect()
    };
    let poisoned = fit(true)?;
    let clean = if cfg.attacks.contains(&AttackKind::Gap) {
        Some(if poison.is_empty() { poisoned.clone() } else { fit(false)? })
    } else {
        None
    };
    Ok(Targets { split, poisoned, clean })
}

/// Scores every (target, challenge) pair through label-only access.
fn score_stage(
    cfg: &ExperimentConfig,
    data: &GameData,
    targets: &Targets,
    hoods: &[NeighborhoodSet],
) -> Result<(Vec<ScoreRecord>, usize)> {
    let mut records = Vec::new();
    let mut queries = 0usize;
    for &kind in &cfg.attacks {
        let models = match kind {
            AttackKind::Chameleon => &targets.poisoned,
            AttackKind::Gap => targets.clean.as_ref().unwrap_or(&targets.poisoned),
        };
        let per_model = models
            .par_iter()
            .enumerate()
            .map(|(j, model)| {
                let oracle = LabelOnly::new(model);
                let rows = data
                    .challenges
                    .points()
                    .iter()
                    .zip(hoods)
                    .map(|(p, hood)| {
                        let truth = targets.split.includes(j, p.index);
                        match kind {
                            AttackKind::Chameleon => attack::chameleon_score(&oracle, p, j, truth, hood),
                            AttackKind::Gap => attack::gap_score(&oracle, p, j, truth),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((rows, oracle.queries()))
            })
            .collect::<Result<Vec<_>>>()?;
        for (rows, q) in per_model {
            records.extend(rows);
            queries += q;
        }
    }
    Ok((records, queries))
}

fn write_csv_artifact(
    manifest: &mut RunManifest,
    out_dir: &Path,
    name: &str,
    write: impl FnOnce(BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let path = out_dir.join(format!("{name}.csv"));
    write(BufWriter::new(File::create(&path)?))?;
    manifest.add_artifact(name, out_dir, &path)
}

fn timed<T>(stage: &'static str, secs: &mut Vec<(String, f64)>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    log::info!("stage {stage}: start");
    let out = f().map_err(|e| e.in_stage(stage))?;
    secs.push((stage.to_string(), start.elapsed().as_secs_f64()));
    log::info!("stage {stage}: done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(out)
}

/// Runs one privacy game and writes its artifacts under `out_dir`.
pub fn run_game(cfg: &ExperimentConfig, poisoning: Poisoning, out_dir: &Path) -> Result<GameOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new(cfg)?;
    let config_path = out_dir.join("config.toml");
    fs::write(&config_path, cfg.to_toml_string()?)?;
    manifest.add_artifact("config", out_dir, &config_path)?;

    let mut secs = Vec::new();
    let data = timed("data", &mut secs, || {
        let data = prepare_data(cfg)?;
        let dir = out_dir.join("data");
        manifest.add_artifact("pool", out_dir, &data.pool.save(&dir, "pool")?)?;
        manifest.add_artifact("test", out_dir, &data.test.save(&dir, "test")?)?;
        Ok(data)
    })?;
    let arch = cfg.architecture(data.pool.dim(), data.pool.num_classes());
    let trainer = MlpTrainer::new(arch, cfg.train.clone()).with_cache(cfg.cache_dir());

    let shadows = timed("poison", &mut secs, || {
        shadow_stage(cfg, poisoning, &data, &trainer, out_dir, &mut manifest)
    })?;
    let shadow_fits = trainer.trained();
    let hoods = timed("neighborhood", &mut secs, || {
        let hoods = neighborhood_stage(cfg, &data, &shadows)?;
        let indices = data.challenges.indices();
        write_csv_artifact(&mut manifest, out_dir, "neighborhoods", |w| {
            neighborhood::write_neighborhood_csv(w, indices.iter().copied().zip(hoods.iter()))
        })?;
        Ok(hoods)
    })?;
    let fallback = hoods.iter().filter(|h| h.fallback_filled).count();
    if fallback > 0 {
        log::warn!("{fallback} neighborhoods were filled past the KL threshold");
    }

    let targets = timed("targets", &mut secs, || target_stage(cfg, &data, &shadows.counts, &trainer))?;
    let (records, queries) = timed("score", &mut secs, || score_stage(cfg, &data, &targets, &hoods))?;
    let reports = timed("metrics", &mut secs, || {
        write_csv_artifact(&mut manifest, out_dir, "scores", |w| attack::write_scores_csv(w, &records))?;
        let mut reports = Vec::new();
        for &kind in &cfg.attacks {
            let (inside, outside) = attack::split_by_truth(&records, kind);
            let curve = metrics::roc_curve(&inside, &outside)?;
            write_csv_artifact(&mut manifest, out_dir, &format!("roc_{kind}"), |w| curve.write_csv(w))?;
            reports.push(metrics::report(kind.name(), &inside, &outside)?);
        }
        write_csv_artifact(&mut manifest, out_dir, "metrics", |w| metrics::write_reports_csv(w, &reports))?;
        Ok(reports)
    })?;

    let mean_acc = |models: &[ModelParams]| -> Result<f64> {
        let accs = models.par_iter().map(|m| accuracy(m, &data.test)).collect::<Result<Vec<_>>>()?;
        Ok(accs.iter().sum::<f64>() / accs.len() as f64)
    };
    let target_accuracy = mean_acc(&targets.poisoned)?;
    let clean_target_accuracy = targets.clean.as_deref().map(mean_acc).transpose()?;

    let max_hood = hoods.iter().map(NeighborhoodSet::len).max().unwrap_or(0);
    let cost = CostReport {
        shadow_models: shadows.shadow_models,
        shadow_model_budget: cfg.poison.max_models(),
        shadow_models_fitted: shadow_fits,
        cache_hits: trainer.cache_hits(),
        target_models: targets.poisoned.len() + targets.clean.as_ref().map_or(0, Vec::len),
        iterations_run: shadows.iterations_run,
        queries_per_challenge: max_hood + 1,
        total_queries: queries,
        stage_seconds: secs,
    };
    write_csv_artifact(&mut manifest, out_dir, "cost", |w| cost.write_csv(w))?;
    write_csv_artifact(&mut manifest, out_dir, "replicas", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["challenge_index", "true_label", "poisoned_label", "replicas"])?;
        for ((p, yp), k) in data.challenges.points().iter().zip(data.challenges.poisoned_labels()).zip(&shadows.counts) {
            w.write_record([p.index.to_string(), p.y.to_string(), yp.to_string(), k.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    manifest.finish(&out_dir.join("run.manifest"))?;

    Ok(GameOutcome {
        reports,
        records,
        replica_counts: shadows.counts,
        cost,
        target_accuracy,
        clean_target_accuracy,
        out_dir: out_dir.to_path_buf(),
    })
}

/// The privacy game with adaptive poisoning (or the per-point variant when
/// `game_strict` is set), written to `cfg.out_dir`.
pub fn run_privacy_game(cfg: &ExperimentConfig) -> Result<GameOutcome> {
    let mode = if cfg.game_strict { Poisoning::Strict } else { Poisoning::Adaptive };
    run_game(cfg, mode, &cfg.out_dir)
}

/// The same pipeline with `k_static` replicas for every challenge point,
/// written to `<out_dir>/static/k<k_static>`.
pub fn run_static_baseline(cfg: &ExperimentConfig, k_static: usize) -> Result<GameOutcome> {
    let mut sub = cfg.clone();
    sub.cache_dir = Some(cfg.cache_dir());
    run_game(&sub, Poisoning::Static(k_static), &cfg.out_dir.join("static").join(format!("k{k_static}")))
}
