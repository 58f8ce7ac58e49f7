//! The optimisation loop: one randomly placed clip per training video per
//! epoch, shuffled by a seeded generator, mini-batches reduced in a fixed
//! order, Adam updates, periodic validation and best-by-validation-AUC
//! model selection. Everything that influences a logged value is derived
//! from the seed, so runs repeat bit-for-bit and resume exactly from a
//! checkpoint.

mod adam;
mod checkpoint;
mod store;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use store::{Access, Prepared, Purpose, VideoStore};

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::sampling::training_start;
use crate::corpus::Label;
use crate::error::{format_err, invalid, Result};
use crate::eval;
use crate::model::{calibrate_pool_norm, init_params, loss_and_grad, mg_frame_features, ModelConfig, ModelParams};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub betas: (f32, f32),
    pub weight_decay: f32,
    pub seed: u64,
    /// Validate every this many steps; 0 validates at the end of each epoch.
    /// The final step is always validated.
    pub eval_every: usize,
    /// Evaluation clips per validation video.
    pub eval_k: usize,
    /// Weight each class by `n / (2 · n_class)` so real and fake videos
    /// contribute equally to the loss.
    pub class_balance: bool,
    /// Keep the videos of one source pair together in a batch and give
    /// them the same clip start. Real and forged versions of the same
    /// content then meet in every gradient, so the content itself cannot
    /// explain the labels.
    pub group_pairs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            lr: 1e-3,
            betas: (0.9, 0.999),
            weight_decay: 0.0,
            seed: 0,
            eval_every: 0,
            eval_k: 4,
            class_balance: true,
            group_pairs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return invalid(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_k == 0 {
            return invalid("epochs, batch_size and eval_k must be positive");
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return invalid("betas must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return invalid("weight_decay must be finite and non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, betas: self.betas, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }
}

/// Everything besides the parameters that the next step depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct RunState {
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    /// Position inside `order` of the next clip.
    pub cursor: u64,
    pub seed: u64,
    /// Training-video indices for the current epoch.
    pub order: Vec<u32>,
    pub rng: ChaCha8Rng,
    pub adam: Adam,
    /// Best validation AUC so far and the parameters that reached it.
    pub best: Option<(f64, ModelParams)>,
}

impl RunState {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        Self {
            step: 0,
            epoch: 0,
            cursor: 0,
            seed,
            order: Vec::new(),
            rng: seed::rng(seed, &[0x7A11]),
            adam: Adam::new(params.tensors.iter().map(|t| t.data.len())),
            best: None,
        }
    }

    pub fn best_val_auc(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    /// 1-based epoch the step belongs to.
    pub epoch: u64,
    pub loss: f32,
    pub val_auc: Option<f64>,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

impl LogRow {
    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.3}",
            self.step,
            self.epoch,
            self.loss,
            opt(self.val_auc),
            opt(self.val_acc),
            self.seconds
        )
    }
}

/// Per-step training record, serialized as CSV
/// `step,epoch,loss,val_auc,val_acc,seconds`. Floats use the shortest
/// representation that round-trips, so logs can be compared exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub const HEADER: &'static str = "step,epoch,loss,val_auc,val_acc,seconds";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            writeln!(s, "{}", r.csv_line()).unwrap();
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<TrainLog> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::HEADER) {
            return format_err("train log header mismatch");
        }
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 6 {
                    return format_err(format!("train log row has {} fields", f.len()));
                }
                fn num<T: std::str::FromStr>(s: &str, line: &str) -> Result<T> {
                    s.parse().map_err(|_| crate::Error::Format(format!("bad train log row {line:?}")))
                }
                let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s, l).map(Some) };
                Ok(LogRow {
                    step: num(f[0], l)?,
                    epoch: num(f[1], l)?,
                    loss: num(f[2], l)?,
                    val_auc: opt(f[3])?,
                    val_acc: opt(f[4])?,
                    seconds: num(f[5], l)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainLog { rows })
    }

    pub fn losses(&self) -> Vec<f32> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    pub fn val_aucs(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.val_auc).collect()
    }
}

pub struct TrainOutcome {
    /// Parameters with the best validation AUC (ties keep the earliest).
    pub best: ModelParams,
    pub last: ModelParams,
    pub state: RunState,
    pub log: TrainLog,
}

impl TrainOutcome {
    pub fn best_val_auc(&self) -> Option<f64> {
        self.state.best_val_auc()
    }
}

pub struct Trainer<'a> {
    store: &'a VideoStore,
    train: Vec<Arc<Prepared>>,
    /// Loss weight per label, indexed by the training target (real, fake).
    class_weight: [f32; 2],
    val: Vec<Arc<Prepared>>,
    cfg: TrainConfig,
    params: ModelParams,
    state: RunState,
    log: TrainLog,
    log_file: Option<File>,
    started: Instant,
}

fn same_pair(a: &Prepared, b: &Prepared) -> bool {
    a.pair_id.is_some() && a.pair_id == b.pair_id
}

fn check_labels(videos: &[Arc<Prepared>], what: &str) -> Result<()> {
    if videos.is_empty() {
        return invalid(format!("{what} set is empty"));
    }
    if what == "validation" {
        let fakes = videos.iter().filter(|v| v.label == Label::Fake).count();
        if fakes == 0 || fakes == videos.len() {
            return invalid("validation set needs both real and fake videos");
        }
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    /// Fresh run with parameters initialised from `cfg.seed`.
    pub fn new(
        store: &'a VideoStore,
        train_ids: &[u32],
        val_ids: &[u32],
        model: &ModelConfig,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let params = init_params(model, cfg.seed)?;
        let state = RunState::new(&params, cfg.seed);
        let mut t = Self::resume(store, train_ids, val_ids, cfg, params, state)?;
        if model.branches.uses_mg() {
            t.calibrate()?;
        }
        Ok(t)
    }

    /// Fit the pooled-feature affine of the motion branch to the first
    /// clip of every training video.
    fn calibrate(&mut self) -> Result<()> {
        let f = self.params.config.frames;
        let p = &self.params;
        let per_video = self
            .train
            .par_iter()
            .map(|v| {
                let clip = v.clip_input(0, f)?;
                mg_frame_features(p, clip.motion, clip.height, clip.width)
            })
            .collect::<Result<Vec<_>>>()?;
        let frames: Vec<Vec<f32>> = per_video.into_iter().flatten().collect();
        calibrate_pool_norm(&mut self.params, &frames)
    }

    /// Continue from saved parameters and run state.
    pub fn resume(
        store: &'a VideoStore,
        train_ids: &[u32],
        val_ids: &[u32],
        cfg: &TrainConfig,
        params: ModelParams,
        state: RunState,
    ) -> Result<Self> {
        cfg.validate()?;
        params.config.validate()?;
        let mut train_ids = train_ids.to_vec();
        train_ids.sort_unstable();
        train_ids.dedup();
        let mut val_ids = val_ids.to_vec();
        val_ids.sort_unstable();
        val_ids.dedup();
        let train = store.load_many(&train_ids, Purpose::Train)?;
        let val = store.load_many(&val_ids, Purpose::Validate)?;
        check_labels(&train, "training")?;
        check_labels(&val, "validation")?;
        let f = params.config.frames;
        if let Some(v) = train.iter().chain(&val).find(|v| v.frames() < f + 1) {
            return invalid(format!("video {} has {} frames, clips need {}", v.video_id, v.frames(), f + 1));
        }
        if state.seed != cfg.seed {
            return invalid(format!("run state seed {} differs from configured seed {}", state.seed, cfg.seed));
        }
        if !state.order.is_empty() && state.order.len() != train.len() {
            return invalid("run state was created for a different training set");
        }
        let fakes = train.iter().filter(|v| v.label == Label::Fake).count();
        let class_weight = if cfg.class_balance && fakes > 0 && fakes < train.len() {
            let n = train.len() as f32;
            [n / (2.0 * (n - fakes as f32)), n / (2.0 * fakes as f32)]
        } else {
            [1.0, 1.0]
        };
        Ok(Self {
            store,
            class_weight,
            train,
            val,
            cfg: cfg.clone(),
            params,
            state,
            log: TrainLog::default(),
            log_file: None,
            started: Instant::now(),
        })
    }

    /// Append every log row to a CSV file as it is produced.
    pub fn log_to(&mut self, path: &Path) -> Result<()> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(f, "{}", TrainLog::HEADER)?;
        }
        self.log_file = Some(f);
        Ok(())
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn store(&self) -> &VideoStore {
        self.store
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.train.len().div_ceil(self.cfg.batch_size) as u64
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_per_epoch() * self.cfg.epochs as u64
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.cfg.epochs as u64
    }

    /// Seeded shuffle of the training set. With `group_pairs` the pairs are
    /// shuffled and each pair's videos stay adjacent in id order.
    fn epoch_order(&mut self) -> Vec<u32> {
        let n = self.train.len() as u32;
        if !self.cfg.group_pairs {
            let mut order: Vec<u32> = (0..n).collect();
            order.shuffle(&mut self.state.rng);
            return order;
        }
        let mut groups: Vec<Vec<u32>> = Vec::new();
        for i in 0..n {
            match groups.iter_mut().find(|g| same_pair(&self.train[g[0] as usize], &self.train[i as usize])) {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        groups.shuffle(&mut self.state.rng);
        groups.concat()
    }

    /// One optimisation step. Returns the mean batch loss, or `None` once all
    /// epochs are done.
    pub fn step(&mut self) -> Result<Option<f32>> {
        if self.is_done() {
            return Ok(None);
        }
        let f = self.params.config.frames;
        let n = self.train.len();
        if self.state.cursor == 0 {
            self.state.order = self.epoch_order();
        }
        let begin = self.state.cursor as usize;
        let end = (begin + self.cfg.batch_size).min(n);
        let mut batch: Vec<(usize, usize)> = Vec::with_capacity(end - begin);
        for &i in &self.state.order[begin..end] {
            let v = &self.train[i as usize];
            // members of one pair share a start so their clips show the same content
            let start = match batch.last() {
                Some(&(j, s)) if self.cfg.group_pairs && same_pair(&self.train[j], v) => s,
                _ => training_start(v.frames(), f, &mut self.state.rng)?,
            };
            batch.push((i as usize, start));
        }

        let params = &self.params;
        let train = &self.train;
        let class_weight = self.class_weight;
        let results = batch
            .par_iter()
            .map(|&(i, start)| {
                let v = &train[i];
                let target = v.label.as_target();
                let (l, _, mut g) = loss_and_grad(params, &v.clip_input(start, f)?, target)?;
                let w = class_weight[target as usize];
                g.scale(w);
                Ok((l * w, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let inv = 1.0 / results.len() as f32;
        let mut grads = self.params.zeros_like();
        let mut loss = 0.0f32;
        for (l, g) in &results {
            loss += l;
            grads.add_assign(g);
        }
        drop(results);
        loss *= inv;
        grads.scale(inv);
        if !loss.is_finite() || !grads.is_finite() {
            return invalid(format!("non-finite loss or gradient at step {}", self.state.step + 1));
        }

        let adam_cfg = self.cfg.adam();
        self.state.adam.step(
            &adam_cfg,
            self.params.tensors.iter_mut().map(|t| t.data.as_mut_slice()),
            grads.tensors.iter().map(|t| t.data.as_slice()),
        );

        self.state.step += 1;
        self.state.cursor = end as u64;
        let epoch = self.state.epoch + 1;
        let epoch_end = end == n;
        if epoch_end {
            self.state.epoch += 1;
            self.state.cursor = 0;
        }
        let validate =
            if self.cfg.eval_every == 0 { epoch_end } else { self.state.step % self.cfg.eval_every as u64 == 0 }
                || self.is_done();
        let (val_auc, val_acc) = if validate {
            let (auc, acc) = self.validate()?;
            if self.state.best.as_ref().is_none_or(|b| auc > b.0) {
                self.state.best = Some((auc, self.params.clone()));
            }
            (Some(auc), Some(acc))
        } else {
            (None, None)
        };
        let row = LogRow {
            step: self.state.step,
            epoch,
            loss,
            val_auc,
            val_acc,
            seconds: self.started.elapsed().as_secs_f64(),
        };
        if let Some(f) = &mut self.log_file {
            writeln!(f, "{}", row.csv_line())?;
            f.flush()?;
        }
        self.log.rows.push(row);
        Ok(Some(loss))
    }

    /// Video-level validation AUC and accuracy of the current parameters.
    pub fn validate(&self) -> Result<(f64, f64)> {
        let scored = eval::score_prepared_set(&self.params, &self.val, self.cfg.eval_k)?;
        eval::metrics(&scored)
    }

    /// Runs up to `max_steps` more steps (all remaining when `None`).
    pub fn run(&mut self, max_steps: Option<u64>) -> Result<()> {
        let mut done = 0;
        while max_steps.is_none_or(|m| done < m) {
            if self.step()?.is_none() {
                break;
            }
            done += 1;
        }
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        let best = self.state.best.as_ref().map(|b| b.1.clone()).unwrap_or_else(|| self.params.clone());
        TrainOutcome { best, last: self.params, state: self.state, log: self.log }
    }
}

/// Train from scratch until all epochs are done.
pub fn train(
    store: &VideoStore,
    train_ids: &[u32],
    val_ids: &[u32],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(store, train_ids, val_ids, model, cfg)?;
    t.run(None)?;
    Ok(t.finish())
}
