//! Metrics, video scoring and the evaluation protocols.
//!
//! * `intra`: train on Match forgeries plus real videos at one compression
//!   level, test on the Match and real test videos of that level.
//! * `cce`: the intra model (same parameters) additionally tested on the
//!   Mismatch and real test videos.
//! * `cme`: one run per forgery family; train on the other two families plus
//!   real videos, test on the held-out family plus real videos.
//!
//! Test videos are cut into segments before scoring. Every report is
//! emitted at segment granularity (primary) and at video granularity, where
//! a video's score is the mean of its segment scores.

mod metrics;

pub use metrics::{accuracy, auc};

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::sampling::{eval_starts, segment_bounds, MAX_SEGMENT_LEN};
use crate::corpus::{Compression, Config, Family, Label, Manifest, SampleRecord, Split, Video};
use crate::error::{invalid, Error, Result};
use crate::flow::FlowEstimator;
use crate::model::{forward, ModelConfig, ModelParams};
use crate::training::{self, Prepared, Purpose, TrainConfig, TrainLog, VideoStore};

pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredVideo {
    pub video_id: u32,
    /// Index of the test segment, 0 for unsegmented videos.
    pub segment: usize,
    pub label: Label,
    pub clip_scores: Vec<f64>,
    pub video_score: f64,
}

impl ScoredVideo {
    pub fn new(video_id: u32, segment: usize, label: Label, clip_scores: Vec<f64>) -> Result<Self> {
        if clip_scores.is_empty() {
            return invalid("no clip scores");
        }
        let video_score = clip_scores.iter().sum::<f64>() / clip_scores.len() as f64;
        Ok(Self { video_id, segment, label, clip_scores, video_score })
    }
}

/// Scores `k` evenly spaced clips of a prepared video and averages their
/// probabilities.
pub fn score_prepared(params: &ModelParams, video: &Prepared, k: usize, segment: usize) -> Result<ScoredVideo> {
    let f = params.config.frames;
    let scores = eval_starts(video.frames(), f, k)?
        .into_iter()
        .map(|s| forward(params, &video.clip_input(s, f)?).map(|(o, _)| f64::from(o.probability())))
        .collect::<Result<Vec<_>>>()?;
    ScoredVideo::new(video.video_id, segment, video.label, scores)
}

/// Scores videos in parallel; the result is ordered by video id.
pub fn score_prepared_set(params: &ModelParams, videos: &[Arc<Prepared>], k: usize) -> Result<Vec<ScoredVideo>> {
    let mut out = videos.par_iter().map(|v| score_prepared(params, v, k, 0)).collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|s| (s.video_id, s.segment));
    Ok(out)
}

/// Scores a raw video, computing its motion-guided frames with `estimator`.
pub fn score_video(
    params: &ModelParams,
    video: &Video,
    estimator: &dyn FlowEstimator,
    k: usize,
    video_id: u32,
    label: Label,
) -> Result<ScoredVideo> {
    let prepared = Prepared::new(video_id, label, video.clone(), estimator)?;
    score_prepared(params, &prepared, k, 0)
}

/// Segments a test video and scores every segment.
pub fn score_segments(params: &ModelParams, video: &Prepared, max_len: usize, k: usize) -> Result<Vec<ScoredVideo>> {
    segment_bounds(video.frames(), max_len, params.config.frames)?
        .into_iter()
        .enumerate()
        .map(|(i, (start, len))| score_prepared(params, &video.segment(start, len)?, k, i))
        .collect()
}

/// AUC and accuracy over scored items, fakes being the positive class.
pub fn metrics(scored: &[ScoredVideo]) -> Result<(f64, f64)> {
    let scores: Vec<f64> = scored.iter().map(|s| s.video_score).collect();
    let labels: Vec<bool> = scored.iter().map(|s| s.label == Label::Fake).collect();
    Ok((auc(&scores, &labels)?, accuracy(&scores, &labels, THRESHOLD)?))
}

/// One score per video: the mean of its segment scores.
pub fn aggregate_segments(segments: &[ScoredVideo]) -> Result<Vec<ScoredVideo>> {
    let ids: BTreeSet<u32> = segments.iter().map(|s| s.video_id).collect();
    ids.into_iter()
        .map(|id| {
            let parts: Vec<&ScoredVideo> = segments.iter().filter(|s| s.video_id == id).collect();
            ScoredVideo::new(id, 0, parts[0].label, parts.iter().map(|s| s.video_score).collect())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Protocol {
    Intra,
    Cce,
    Cme,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Intra => "intra",
            Protocol::Cce => "cce",
            Protocol::Cme => "cme",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intra" => Ok(Protocol::Intra),
            "cce" => Ok(Protocol::Cce),
            "cme" => Ok(Protocol::Cme),
            _ => invalid(format!("unknown protocol {s:?} (intra, cce, cme)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    Segment,
    Video,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Segment => "segment",
            Granularity::Video => "video",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub granularity: Granularity,
    pub level: Compression,
    pub train_families: Vec<Family>,
    /// `None` when every forged family is tested together.
    pub test_family: Option<Family>,
    pub test_config: Config,
    pub auc: f64,
    pub acc: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Digest of the evaluated parameters.
    pub params_digest: String,
    pub train_ids: Vec<u32>,
    pub test_ids: Vec<u32>,
}

fn join_families(f: &[Family]) -> String {
    f.iter().map(|f| f.as_str()).collect::<Vec<_>>().join("+")
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "protocol,level,train_families,test_family,auc,acc,n_real,n_fake,seed";

    /// Protocol column: protocol and granularity, e.g. `cme-segment`.
    pub fn protocol_name(&self) -> String {
        format!("{}-{}", self.protocol, self.granularity.as_str())
    }

    pub fn test_family_name(&self) -> String {
        self.test_family.map_or_else(|| "all".to_string(), |f| f.as_str().to_string())
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{},{},{}",
            self.protocol_name(),
            self.level,
            join_families(&self.train_families),
            self.test_family_name(),
            self.auc,
            self.acc,
            self.n_real,
            self.n_fake,
            self.seed
        )
    }

    pub fn text_line(&self) -> String {
        format!(
            "{:<14} {:>4}  train {:<20} test {:<5} {:<8} AUC {:.4}  Acc {:.4}  real {:>3} fake {:>3}  seed {}",
            self.protocol_name(),
            self.level,
            join_families(&self.train_families),
            self.test_family_name(),
            self.test_config,
            self.auc,
            self.acc,
            self.n_real,
            self.n_fake,
            self.seed
        )
    }
}

pub fn reports_csv(reports: &[MetricsReport]) -> String {
    let mut s = format!("{}\n", MetricsReport::CSV_HEADER);
    for r in reports {
        writeln!(s, "{}", r.csv_row()).unwrap();
    }
    s
}

pub fn reports_text(reports: &[MetricsReport]) -> String {
    reports.iter().map(|r| r.text_line() + "\n").collect()
}

/// Where the evaluated parameters come from.
pub enum ModelSource<'a> {
    /// Train per protocol definition.
    Train { model: ModelConfig, train: TrainConfig },
    /// Evaluate fixed parameters (intra and cce only).
    Params { params: &'a ModelParams, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub level: Compression,
    pub eval_k: usize,
    pub max_segment: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { level: Compression::C40, eval_k: 4, max_segment: MAX_SEGMENT_LEN }
    }
}

/// A trained (or supplied) model and everything evaluated with it.
pub struct ProtocolRun {
    pub held_out: Option<Family>,
    pub params: ModelParams,
    pub log: Option<TrainLog>,
    pub best_val_auc: Option<f64>,
    pub reports: Vec<MetricsReport>,
}

fn is_real(r: &SampleRecord) -> bool {
    r.label == Label::Real
}

/// Ids for one side of a protocol: real videos plus fakes with the given
/// configuration and families, at one compression level, in one split.
pub fn protocol_ids(
    manifest: &Manifest,
    split: Split,
    level: Compression,
    config: Config,
    families: &[Family],
) -> Vec<u32> {
    manifest.select(|r| {
        r.split == split
            && r.compression == level
            && (is_real(r) || (r.config == config && families.contains(&r.family)))
    })
}

fn check_ids(manifest: &Manifest, ids: &[u32], what: &str) -> Result<()> {
    let fakes = ids.iter().filter(|&&id| manifest.record(id).is_some_and(|r| r.label == Label::Fake)).count();
    if fakes == 0 || fakes == ids.len() {
        return invalid(format!("{what} needs real and fake videos; the manifest has none of one kind"));
    }
    Ok(())
}

struct Trained {
    params: ModelParams,
    log: Option<TrainLog>,
    best_val_auc: Option<f64>,
    seed: u64,
    train_ids: Vec<u32>,
}

fn obtain_model(
    store: &VideoStore,
    source: &ModelSource<'_>,
    level: Compression,
    families: &[Family],
) -> Result<Trained> {
    let manifest = store.manifest();
    let train_ids = protocol_ids(manifest, Split::Train, level, Config::Match, families);
    match source {
        ModelSource::Params { params, seed } => {
            Ok(Trained { params: (*params).clone(), log: None, best_val_auc: None, seed: *seed, train_ids })
        }
        ModelSource::Train { model, train } => {
            let val_ids = protocol_ids(manifest, Split::Val, level, Config::Match, families);
            check_ids(manifest, &train_ids, "training set")?;
            check_ids(manifest, &val_ids, "validation set")?;
            let out = training::train(store, &train_ids, &val_ids, model, train)?;
            let best_val_auc = out.best_val_auc();
            Ok(Trained { params: out.best, log: Some(out.log), best_val_auc, seed: train.seed, train_ids })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn test_reports(
    store: &VideoStore,
    trained: &Trained,
    protocol: Protocol,
    opts: &EvalOptions,
    train_families: &[Family],
    test_families: &[Family],
    test_family: Option<Family>,
    config: Config,
) -> Result<Vec<MetricsReport>> {
    let manifest = store.manifest();
    let test_ids = protocol_ids(manifest, Split::Test, opts.level, config, test_families);
    check_ids(manifest, &test_ids, "test set")?;
    let videos = store.load_many(&test_ids, Purpose::Test)?;
    let params = &trained.params;
    let mut segments: Vec<ScoredVideo> = videos
        .par_iter()
        .map(|v| score_segments(params, v, opts.max_segment, opts.eval_k))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    segments.sort_by_key(|s| (s.video_id, s.segment));
    let per_video = aggregate_segments(&segments)?;
    let digest = params.digest();
    [(Granularity::Segment, &segments), (Granularity::Video, &per_video)]
        .into_iter()
        .map(|(granularity, scored)| {
            let (auc, acc) = metrics(scored)?;
            let n_fake = scored.iter().filter(|s| s.label == Label::Fake).count();
            Ok(MetricsReport {
                protocol,
                granularity,
                level: opts.level,
                train_families: train_families.to_vec(),
                test_family,
                test_config: config,
                auc,
                acc,
                n_real: scored.len() - n_fake,
                n_fake,
                seed: trained.seed,
                threshold: THRESHOLD,
                params_digest: digest.clone(),
                train_ids: trained.train_ids.clone(),
                test_ids: test_ids.clone(),
            })
        })
        .collect()
}

/// Runs one protocol. `intra` yields one run; `cce` yields one run whose
/// reports cover both the Match test set and the Mismatch test set; `cme`
/// yields three runs, one per held-out family, and requires training.
pub fn run_protocol(
    store: &VideoStore,
    protocol: Protocol,
    source: &ModelSource<'_>,
    opts: &EvalOptions,
) -> Result<Vec<ProtocolRun>> {
    let all = Family::FORGED;
    match protocol {
        Protocol::Intra | Protocol::Cce => {
            let trained = obtain_model(store, source, opts.level, &all)?;
            let mut reports = test_reports(store, &trained, Protocol::Intra, opts, &all, &all, None, Config::Match)?;
            if protocol == Protocol::Cce {
                reports.extend(test_reports(store, &trained, Protocol::Cce, opts, &all, &all, None, Config::Mismatch)?);
            }
            Ok(vec![ProtocolRun {
                held_out: None,
                params: trained.params,
                log: trained.log,
                best_val_auc: trained.best_val_auc,
                reports,
            }])
        }
        Protocol::Cme => {
            if matches!(source, ModelSource::Params { .. }) {
                return invalid("cme trains one model per held-out family; supply a training configuration");
            }
            all.iter()
                .map(|&held| {
                    let train_fams: Vec<Family> = all.iter().copied().filter(|&f| f != held).collect();
                    let trained = obtain_model(store, source, opts.level, &train_fams)?;
                    let reports = test_reports(
                        store,
                        &trained,
                        Protocol::Cme,
                        opts,
                        &train_fams,
                        &[held],
                        Some(held),
                        Config::Match,
                    )?;
                    Ok(ProtocolRun {
                        held_out: Some(held),
                        params: trained.params,
                        log: trained.log,
                        best_val_auc: trained.best_val_auc,
                        reports,
                    })
                })
                .collect()
        }
    }
}

/// Problems that would make a report's numbers untrustworthy: shared ids
/// between training and testing, ids outside their split, pairs appearing
/// on both sides, and pairs split across partitions in the manifest.
pub fn hygiene_violations(manifest: &Manifest, report: &MetricsReport) -> Vec<String> {
    let mut out = Vec::new();
    let train: BTreeSet<u32> = report.train_ids.iter().copied().collect();
    let test: BTreeSet<u32> = report.test_ids.iter().copied().collect();
    for id in train.intersection(&test) {
        out.push(format!("video {id} used for training and testing"));
    }
    let mut pairs = [BTreeSet::new(), BTreeSet::new()];
    for (side, ids, split) in [(0, &train, Split::Train), (1, &test, Split::Test)] {
        for &id in ids {
            match manifest.record(id) {
                None => out.push(format!("video {id} missing from manifest")),
                Some(r) => {
                    if r.split != split {
                        out.push(format!("video {id} is in {} but used as {split}", r.split));
                    }
                    pairs[side].insert(r.pair_id);
                }
            }
        }
    }
    for p in pairs[0].intersection(&pairs[1]) {
        out.push(format!("pair {p} appears in training and testing"));
    }
    if let Some(held) = report.test_family.filter(|_| report.protocol == Protocol::Cme) {
        for &id in &train {
            if manifest.record(id).is_some_and(|r| r.family == held) {
                out.push(format!("video {id} of held-out family {held} used for training"));
            }
        }
    }
    for p in manifest.pair_split_violations() {
        out.push(format!("pair {p} spans several splits"));
    }
    out
}
