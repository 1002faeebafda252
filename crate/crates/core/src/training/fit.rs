use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::checkpoint::{Checkpoint, OptimizerState};
use super::loss::chamfer_loss_with_grad;
use super::{TrainConfig, TrainState};
use crate::data::{load_gt_cloud, preprocess_image, DatasetManifest, PreprocessSpec, Split};
use crate::error::{Error, Result};
use crate::model::{Backbone, FeatureSequence, GeneratorModel};
use crate::pointcloud::{Point3, PointCloud};

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Backbone features per image path. Valid for one backbone only; handing it
/// to a model with a different backbone hash empties it.
#[derive(Debug, Default)]
pub struct FeatureCache {
    backbone_hash: Option<String>,
    features: HashMap<PathBuf, FeatureSequence>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn bind(&mut self, hash: &str) {
        if self.backbone_hash.as_deref() != Some(hash) {
            self.features.clear();
            self.backbone_hash = Some(hash.to_string());
        }
    }

    fn ensure(&mut self, backbone: &dyn Backbone, spec: &PreprocessSpec, path: &Path) -> Result<()> {
        if !self.features.contains_key(path) {
            let input = preprocess_image(path, spec)?;
            let feats = backbone.extract(&input)?;
            self.features.insert(path.to_path_buf(), feats);
        }
        Ok(())
    }

    fn get(&self, path: &Path) -> &FeatureSequence {
        &self.features[path]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_cd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub steps: usize,
    pub epochs: usize,
    pub losses: Vec<f64>,
    pub best_val_cd: Option<f64>,
}

struct Sample {
    id: String,
    images: Vec<PathBuf>,
    gt: PointCloud,
}

fn load_samples(manifest: &DatasetManifest, split: Split, n_points: usize, seed: u64) -> Result<Vec<Sample>> {
    manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == split)
        .map(|(i, r)| {
            let gt = load_gt_cloud(manifest, r, manifest.gt_resolution, seed.wrapping_add(i as u64))?;
            if gt.len() != n_points {
                return Err(Error::ResolutionMismatch {
                    record: r.id.clone(),
                    model: n_points,
                    gt: gt.len(),
                });
            }
            if r.images.is_empty() {
                return Err(Error::MissingFile {
                    record: r.id.clone(),
                    path: manifest.resolve(Path::new("renders")),
                });
            }
            Ok(Sample {
                id: r.id.clone(),
                images: r.images.iter().map(|p| manifest.resolve(p)).collect(),
                gt,
            })
        })
        .collect()
}

/// Mini-batch trainer for the generator head. The backbone is only read.
pub struct Trainer {
    model: GeneratorModel,
    cfg: TrainConfig,
    train: Vec<Sample>,
    val: Vec<Sample>,
    cache: FeatureCache,
    preprocess: PreprocessSpec,
    adam: Adam,
    state: TrainState,
    out_dir: Option<PathBuf>,
    log: Option<File>,
    started: Instant,
    losses: Vec<f64>,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("cfg", &self.cfg)
            .field("step", &self.state.step)
            .field("epoch", &self.state.epoch)
            .finish_non_exhaustive()
    }
}

impl Trainer {
    /// Fresh run. Training records come from the train split and validation
    /// from the test split.
    pub fn new(model: GeneratorModel, manifest: &DatasetManifest, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let hash = model.backbone_hash();
        let train = load_samples(manifest, Split::Train, model.n_points(), cfg.seed)?;
        if train.is_empty() {
            return Err(Error::InvalidConfig("manifest has no training records".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let state = TrainState {
            step: 0,
            epoch: 0,
            cursor: 0,
            order,
            rng,
            best_val_cd: None,
            backbone_hash: hash,
        };
        let adam = Adam::new(model.head(), cfg.adam());
        Self::assemble(model, manifest, cfg, train, adam, state)
    }

    /// Continues the run stored in `checkpoint`. `cfg` replaces the stored
    /// training configuration when given (for example to extend the budget).
    pub fn resume(
        manifest: &DatasetManifest,
        checkpoint: &Checkpoint,
        backbone: Arc<dyn Backbone>,
        cfg: Option<TrainConfig>,
    ) -> Result<Self> {
        let (Some(state), Some(stored), Some(opt)) = (&checkpoint.state, &checkpoint.train_config, &checkpoint.optimizer)
        else {
            return Err(Error::InvalidConfig("checkpoint carries no training state".into()));
        };
        let cfg = cfg.unwrap_or_else(|| stored.clone());
        cfg.validate()?;
        let model = checkpoint.restore_model(backbone)?;
        let corrupt = |reason: String| Error::CorruptArchive {
            path: PathBuf::new(),
            reason,
        };
        let mut adam = opt.restore(model.head()).map_err(corrupt)?;
        adam.config = cfg.adam();
        let train = load_samples(manifest, Split::Train, model.n_points(), cfg.seed)?;
        if state.order.len() != train.len() {
            return Err(Error::InvalidConfig(format!(
                "checkpoint was trained on {} records but the manifest has {}",
                state.order.len(),
                train.len()
            )));
        }
        Self::assemble(model, manifest, cfg, train, adam, state.clone())
    }

    fn assemble(
        model: GeneratorModel,
        manifest: &DatasetManifest,
        cfg: TrainConfig,
        train: Vec<Sample>,
        adam: Adam,
        state: TrainState,
    ) -> Result<Self> {
        let val = load_samples(manifest, Split::Test, model.n_points(), cfg.seed)?;
        let mut cache = FeatureCache::new();
        cache.bind(&state.backbone_hash);
        Ok(Self {
            preprocess: PreprocessSpec::new(model.backbone().channel_stats()),
            model,
            cfg,
            train,
            val,
            cache,
            adam,
            state,
            out_dir: None,
            log: None,
            started: Instant::now(),
            losses: Vec::new(),
        })
    }

    /// Reuses features extracted by an earlier trainer on the same backbone.
    pub fn with_cache(mut self, mut cache: FeatureCache) -> Self {
        cache.bind(&self.state.backbone_hash);
        self.cache = cache;
        self
    }

    /// Writes the step log and checkpoints under `dir`. A resumed run appends
    /// to an existing log.
    pub fn with_output(mut self, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(TRAIN_LOG);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(self.state.step > 0)
            .truncate(self.state.step == 0)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        self.log = Some(file);
        self.out_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn model(&self) -> &GeneratorModel {
        &self.model
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn into_parts(self) -> (GeneratorModel, FeatureCache) {
        (self.model, self.cache)
    }

    pub fn finished(&self) -> bool {
        self.cfg.max_steps.is_some_and(|m| self.state.step >= m) || self.state.completed_epochs() >= self.cfg.max_epochs
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model_config: self.model.config().clone(),
            backbone_hash: self.state.backbone_hash.clone(),
            head: self.model.head().to_tensors(),
            optimizer: Some(OptimizerState::capture(self.model.head(), &self.adam)),
            state: Some(self.state.clone()),
            train_config: Some(self.cfg.clone()),
        }
    }

    fn prepare(&mut self, samples: &[(bool, usize, usize)]) -> Result<()> {
        let backbone = Arc::clone(self.model.backbone());
        for &(is_train, i, view) in samples {
            let set = if is_train { &self.train } else { &self.val };
            self.cache.ensure(backbone.as_ref(), &self.preprocess, &set[i].images[view])?;
        }
        Ok(())
    }

    fn lookup(&self, samples: &[(bool, usize, usize)]) -> Vec<&FeatureSequence> {
        samples
            .iter()
            .map(|&(is_train, i, view)| {
                let set = if is_train { &self.train } else { &self.val };
                self.cache.get(&set[i].images[view])
            })
            .collect()
    }

    /// One optimizer step on the next mini-batch, without logging.
    fn advance(&mut self) -> Result<StepRecord> {
        if self.state.cursor >= self.state.order.len() {
            self.state.epoch += 1;
            self.state.cursor = 0;
            self.state.order.shuffle(&mut self.state.rng);
        }
        let end = (self.state.cursor + self.cfg.batch_size).min(self.state.order.len());
        let batch: Vec<usize> = self.state.order[self.state.cursor..end].to_vec();
        let epoch = self.state.epoch;
        let keys: Vec<_> = batch
            .iter()
            .map(|&i| (true, i, epoch % self.train[i].images.len()))
            .collect();
        self.prepare(&keys)?;
            let feats = self.lookup(&keys);
        let head = self.model.head();
        let (out, cache) = head.forward(&feats)?;

        let n = self.model.n_points();
        let scale = self.cfg.alpha / batch.len() as f64;
        let mut dy = Array2::<f32>::zeros(out.dim());
        let mut total = 0.0;
        let mut finite = out.iter().all(|v| v.is_finite());
        if finite {
            for (row, &i) in batch.iter().enumerate() {
                let generated: Vec<Point3> = (0..n)
                    .map(|j| [0, 1, 2].map(|c| out[[row, 3 * j + c]] as f64))
                    .collect();
                let (l, grad) = chamfer_loss_with_grad(self.train[i].gt.points(), &generated)?;
                total += l;
                for (j, g) in grad.iter().enumerate() {
                    for c in 0..3 {
                        dy[[row, 3 * j + c]] = (scale * g[c]) as f32;
                    }
                }
            }
        }
        let loss = scale * total;
        finite &= loss.is_finite();
        let grads = head.backward(&cache, &dy);
        if !finite || !grads.squared_norm().is_finite() {
            return Err(self.abort_non_finite());
        }
        self.adam.step(self.model.head_mut(), &grads);
        self.state.cursor = end;
        self.state.step += 1;
        self.losses.push(loss);
        Ok(StepRecord {
            step: self.state.step,
            epoch,
            loss,
            lr: self.adam.config.learning_rate,
            wall_ms: self.started.elapsed().as_millis() as u64,
            val_cd: None,
        })
    }

    fn abort_non_finite(&self) -> Error {
        let step = self.state.step;
        let snapshot = self.out_dir.as_ref().and_then(|dir| {
            let path = dir.join(format!("nonfinite-step{step}.ckpt"));
            self.checkpoint().save(&path).ok().map(|_| path)
        });
        log::error!("non-finite loss at step {step}; ids {:?}", self.batch_ids());
        Error::NonFiniteLoss { step, snapshot }
    }

    fn batch_ids(&self) -> Vec<&str> {
        let end = (self.state.cursor + self.cfg.batch_size).min(self.state.order.len());
        self.state.order[self.state.cursor..end]
            .iter()
            .map(|&i| self.train[i].id.as_str())
            .collect()
    }

    fn write_log(&mut self, record: &StepRecord) -> Result<()> {
        if let (Some(file), Some(dir)) = (&mut self.log, &self.out_dir) {
            let line = serde_json::to_string(record)?;
            writeln!(file, "{line}").map_err(|e| Error::io(dir.join(TRAIN_LOG), e))?;
        }
        Ok(())
    }

    /// One logged optimizer step.
    pub fn step(&mut self) -> Result<StepRecord> {
        let record = self.advance()?;
        self.write_log(&record)?;
        Ok(record)
    }

    /// Mean Chamfer distance over a split, using the first view of each
    /// record. `None` when the split is empty.
    pub fn evaluate(&mut self, split: Split) -> Result<Option<f64>> {
        let is_train = split == Split::Train;
        let count = if is_train { self.train.len() } else { self.val.len() };
        if count == 0 {
            return Ok(None);
        }
        let mut total = 0.0;
        let indices: Vec<usize> = (0..count).collect();
        for chunk in indices.chunks(self.cfg.batch_size) {
            let keys: Vec<_> = chunk.iter().map(|&i| (is_train, i, 0)).collect();
            self.prepare(&keys)?;
            let feats = self.lookup(&keys);
            let clouds = self.model.forward_features(&feats)?;
            for (&i, cloud) in chunk.iter().zip(&clouds) {
                let gt = if is_train { &self.train[i].gt } else { &self.val[i].gt };
                total += chamfer_loss_with_grad(gt.points(), cloud.points())?.0;
            }
        }
        Ok(Some(total / count as f64))
    }

    fn save(&self, name: &str) -> Result<()> {
        match &self.out_dir {
            Some(dir) => self.checkpoint().save(&dir.join(name)),
            None => Ok(()),
        }
    }

    /// Trains until the epoch or step budget is exhausted, validating and
    /// checkpointing on the configured periods.
    pub fn run(&mut self) -> Result<FitReport> {
        let hash = self.model.backbone_hash();
        if hash != self.state.backbone_hash {
            return Err(Error::BackboneMismatch {
                expected: self.state.backbone_hash.clone(),
                found: hash,
            });
        }
        while !self.finished() {
            let mut record = self.advance()?;
            let epoch_end = self.state.cursor >= self.state.order.len();
            let due = |every: usize| if every > 0 { record.step % every == 0 } else { epoch_end };
            if due(self.cfg.eval_every) {
                record.val_cd = self.evaluate(Split::Test)?;
                if let Some(cd) = record.val_cd {
                    if self.state.best_val_cd.is_none_or(|best| cd < best) {
                        self.state.best_val_cd = Some(cd);
                        self.save(BEST_CHECKPOINT)?;
                    }
                }
            }
            if due(self.cfg.checkpoint_every) {
                self.save(LAST_CHECKPOINT)?;
            }
            log::info!("step {} epoch {} loss {:.6}", record.step, record.epoch, record.loss);
            self.write_log(&record)?;
        }
        self.save(LAST_CHECKPOINT)?;
        let hash = self.model.backbone_hash();
        if hash != self.state.backbone_hash {
            return Err(Error::BackboneMismatch {
                expected: self.state.backbone_hash.clone(),
                found: hash,
            });
        }
        Ok(FitReport {
            steps: self.state.step,
            epochs: self.state.completed_epochs(),
            losses: self.losses.clone(),
            best_val_cd: self.state.best_val_cd,
        })
    }
}

/// Trains `model` on the train split of `manifest`, writing logs and
/// checkpoints under `out_dir` when given.
pub fn fit(
    model: GeneratorModel,
    manifest: &DatasetManifest,
    cfg: TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(GeneratorModel, FitReport)> {
    let mut trainer = Trainer::new(model, manifest, cfg)?;
    if let Some(dir) = out_dir {
        trainer = trainer.with_output(dir)?;
    }
    let report = trainer.run()?;
    Ok((trainer.into_parts().0, report))
}
