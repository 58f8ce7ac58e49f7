//! Synthetic forgery corpus: generation, compression, manifest, partition
//! and clip sampling.
//!
//! The manifest is a text file: a header line
//! `#ttdf-manifest v1 seed=<u64> res=<u32>` followed by one tab-separated
//! record per line with the fields
//! `video_path label family config compression split pair_id video_id`.

pub mod compress;
pub mod preprocess;
pub mod sampling;
pub mod scene;
pub mod video;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use compress::{compress, compress_with, QuantTable};
pub use preprocess::{preprocess, preprocess_video};
pub use sampling::{
    eval_starts, sample_eval_clips, sample_training_clip, segment_bounds, segment_test_video, ClipSample,
    MAX_SEGMENT_LEN,
};
pub use scene::{forge_video, generate_real_video, RealVideo, Scene, Trajectory};
pub use video::{psnr, Image, Video};

use crate::error::{format_err, invalid, Error, Result};
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.tsv";

macro_rules! string_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => invalid(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    )),
                }
            }
        }
    };
}

string_enum!(Label { Real => "real", Fake => "fake" });
string_enum!(
    /// Manipulation family; each injects a distinct temporal artifact.
    Family { A => "FAM-A", B => "FAM-B", C => "FAM-C", None => "none" }
);
string_enum!(Config { Match => "match", Mismatch => "mismatch", None => "none" });
string_enum!(Compression { C23 => "C23", C40 => "C40", Raw => "raw" });
string_enum!(Split { Train => "train", Val => "val", Test => "test" });

impl Family {
    pub const FORGED: [Family; 3] = [Family::A, Family::B, Family::C];
}

impl Label {
    pub fn as_target(self) -> f32 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }
}

impl Compression {
    /// Accepts `c23`/`C23`/`23` style spellings.
    pub fn parse_loose(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches('c') {
            "23" => Ok(Compression::C23),
            "40" => Ok(Compression::C40),
            "raw" | "aw" => Ok(Compression::Raw),
            _ => invalid(format!("unknown compression level {s:?} (expected c23 or c40)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub video_path: String,
    pub label: Label,
    pub family: Family,
    pub config: Config,
    pub compression: Compression,
    pub split: Split,
    pub pair_id: u32,
    pub video_id: u32,
}

impl SampleRecord {
    fn validate(&self) -> Result<()> {
        let real = self.label == Label::Real;
        let untagged = self.family == Family::None && self.config == Config::None;
        let tagged = self.family != Family::None && self.config != Config::None;
        if (real && !untagged) || (!real && !tagged) {
            return format_err(format!("record {} has inconsistent label/family/config", self.video_id));
        }
        Ok(())
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.video_path,
            self.label,
            self.family,
            self.config,
            self.compression,
            self.split,
            self.pair_id,
            self.video_id
        )
    }

    fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return format_err(format!("manifest record has {} fields, expected 8", f.len()));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| Error::Format(format!("bad integer {s:?}")));
        let fmt = |e: Error| Error::Format(e.to_string());
        let rec = SampleRecord {
            video_path: f[0].to_string(),
            label: f[1].parse().map_err(fmt)?,
            family: f[2].parse().map_err(fmt)?,
            config: f[3].parse().map_err(fmt)?,
            compression: f[4].parse().map_err(fmt)?,
            split: f[5].parse().map_err(fmt)?,
            pair_id: num(f[6])?,
            video_id: num(f[7])?,
        };
        rec.validate()?;
        Ok(rec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    pub corpus_seed: u64,
    pub resolution: u32,
    /// Directory that record paths are relative to. Not serialized.
    pub root: PathBuf,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = format!("#ttdf-manifest v1 seed={} res={}\n", self.corpus_seed, self.resolution);
        for r in &self.records {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Manifest> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty manifest".into()))?;
        let rest = header
            .strip_prefix("#ttdf-manifest v1 ")
            .ok_or_else(|| Error::Format(format!("bad manifest header {header:?}")))?;
        let mut seed = None;
        let mut res = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("res", v)) => res = v.parse::<u32>().ok(),
                _ => return format_err(format!("bad manifest header field {kv:?}")),
            }
        }
        let (Some(corpus_seed), Some(resolution)) = (seed, res) else {
            return format_err("manifest header needs seed and res");
        };
        let records = lines.filter(|l| !l.is_empty()).map(SampleRecord::parse_line).collect::<Result<Vec<_>>>()?;
        let manifest = Manifest { records, corpus_seed, resolution, root: root.into() };
        let mut ids = BTreeSet::new();
        if !manifest.records.iter().all(|r| ids.insert(r.video_id)) {
            return format_err("duplicate video_id in manifest");
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Load a manifest and check that every referenced video exists.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Manifest::parse(&text, root)?;
        for r in &manifest.records {
            let p = manifest.video_path(r);
            if !p.is_file() {
                return Err(Error::Missing(format!("video {} listed in manifest", p.display())));
            }
        }
        Ok(manifest)
    }

    pub fn video_path(&self, rec: &SampleRecord) -> PathBuf {
        self.root.join(&rec.video_path)
    }

    /// Ids of the records matching `pred`, ascending.
    pub fn select(&self, pred: impl Fn(&SampleRecord) -> bool) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().filter(|r| pred(r)).map(|r| r.video_id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn record(&self, video_id: u32) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    /// Record counts keyed by `(label, family, config, compression, split)`.
    pub fn counts(&self) -> BTreeMap<(Label, Family, Config, Compression, Split), usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry((r.label, r.family, r.config, r.compression, r.split)).or_insert(0) += 1;
        }
        m
    }

    /// Pair ids whose records span more than one split.
    pub fn pair_split_violations(&self) -> Vec<u32> {
        let mut by_pair: BTreeMap<u32, BTreeSet<Split>> = BTreeMap::new();
        for r in &self.records {
            by_pair.entry(r.pair_id).or_default().insert(r.split);
        }
        by_pair.into_iter().filter(|(_, s)| s.len() > 1).map(|(p, _)| p).collect()
    }
}

/// Split sizes in pairs: validation and test take `floor(ratio * pairs)`
/// (at least one when the ratio is positive), the remainder goes to training.
pub fn split_sizes(pairs: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return invalid(format!("split ratios {ratios:?} must be non-negative and sum to 1"));
    }
    if pairs < 3 {
        return invalid(format!("need at least 3 pairs to partition, got {pairs}"));
    }
    // a split with a positive ratio gets at least one pair
    let take = |r: f64| {
        let n = (r * pairs as f64 + 1e-9).floor() as usize;
        if r > 0.0 {
            n.max(1)
        } else {
            n
        }
    };
    let (val, test) = (take(ratios[1]), take(ratios[2]));
    let train = pairs.saturating_sub(val + test);
    if train == 0 || val == 0 || test == 0 {
        return invalid(format!("ratios {ratios:?} over {pairs} pairs leave an empty split ({train}/{val}/{test})"));
    }
    Ok([train, val, test])
}

/// 240/50/50 of 340 videos.
pub const DEFAULT_RATIOS: [f64; 3] = [240.0 / 340.0, 50.0 / 340.0, 50.0 / 340.0];

/// Assign splits by pair: every record of a pair lands in the same split.
pub fn partition(manifest: &Manifest, ratios: [f64; 3]) -> Result<Manifest> {
    let mut pairs: Vec<u32> = manifest.records.iter().map(|r| r.pair_id).collect::<BTreeSet<_>>().into_iter().collect();
    let [train, val, _] = split_sizes(pairs.len(), ratios)?;
    pairs.shuffle(&mut seed::rng(manifest.corpus_seed, &[0x5B17]));
    let assign: BTreeMap<u32, Split> = pairs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let s = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            (p, s)
        })
        .collect();
    let mut out = manifest.clone();
    for r in &mut out.records {
        r.split = assign[&r.pair_id];
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CorpusOptions {
    pub resolution: usize,
    pub length: usize,
    pub ratios: [f64; 3],
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { resolution: 64, length: 32, ratios: DEFAULT_RATIOS }
    }
}

pub const MIN_PAIRS: usize = 5;
const LEVELS: [Compression; 2] = [Compression::C23, Compression::C40];
/// Records per pair member: real plus match/mismatch per family, each at two levels.
const PER_MEMBER: usize = (1 + 2 * 3) * 2;

/// Generate `n_pairs` pairs of real videos, their match and mismatch
/// forgeries for every family, compress everything at C23 and C40, write the
/// videos under `out_dir/videos/` and the manifest to `out_dir/manifest.tsv`.
/// Splits are assigned with `opts.ratios`.
pub fn build_corpus(n_pairs: usize, seed: u64, out_dir: &Path, opts: &CorpusOptions) -> Result<Manifest> {
    if n_pairs < MIN_PAIRS {
        return invalid(format!("need at least {MIN_PAIRS} pairs, got {n_pairs}"));
    }
    if opts.resolution % 8 != 0 {
        return invalid(format!("resolution {} must be a multiple of 8", opts.resolution));
    }
    // fail on bad ratios before doing any work
    split_sizes(n_pairs, opts.ratios)?;
    let videos = out_dir.join("videos");
    fs::create_dir_all(&videos)?;

    let per_pair: Vec<Vec<SampleRecord>> =
        (0..n_pairs).into_par_iter().map(|p| build_pair(p, seed, out_dir, opts)).collect::<Result<_>>()?;
    let manifest = Manifest {
        records: per_pair.into_iter().flatten().collect(),
        corpus_seed: seed,
        resolution: opts.resolution as u32,
        root: out_dir.to_path_buf(),
    };
    let manifest = partition(&manifest, opts.ratios)?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn build_pair(p: usize, seed: u64, out_dir: &Path, opts: &CorpusOptions) -> Result<Vec<SampleRecord>> {
    let reals =
        [0u64, 1].map(|m| generate_real_video(seed::derive(seed, &[p as u64, m]), opts.length, opts.resolution));
    let [a, b] = reals;
    let reals = [a?, b?];
    let mut records = Vec::with_capacity(2 * PER_MEMBER);
    for (m, real) in reals.iter().enumerate() {
        let partner = reals[1 - m].scene.trajectory();
        let mut variants: Vec<(Label, Family, Config, Video)> =
            vec![(Label::Real, Family::None, Config::None, real.video.clone())];
        for (fi, family) in Family::FORGED.into_iter().enumerate() {
            for (ci, config) in [Config::Match, Config::Mismatch].into_iter().enumerate() {
                let s = seed::derive(seed, &[p as u64, m as u64, 10 + fi as u64, ci as u64]);
                let fake = forge_video(real, family, config, Some(partner), s)?;
                variants.push((Label::Fake, family, config, fake));
            }
        }
        for (vi, (label, family, config, raw)) in variants.into_iter().enumerate() {
            for (li, level) in LEVELS.into_iter().enumerate() {
                let video_id = (p * 2 * PER_MEMBER + m * PER_MEMBER + vi * 2 + li) as u32;
                let rel = format!("videos/{video_id:06}.ttdv");
                compress(&raw, level)?.save(&out_dir.join(&rel))?;
                records.push(SampleRecord {
                    video_path: rel,
                    label,
                    family,
                    config,
                    compression: level,
                    split: Split::Train,
                    pair_id: p as u32,
                    video_id,
                });
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_manifest(pairs: u32) -> Manifest {
        let records = (0..pairs * 2)
            .map(|i| SampleRecord {
                video_path: format!("v{i}"),
                label: Label::Real,
                family: Family::None,
                config: Config::None,
                compression: Compression::C23,
                split: Split::Train,
                pair_id: i / 2,
                video_id: i,
            })
            .collect();
        Manifest { records, corpus_seed: 3, resolution: 64, root: PathBuf::new() }
    }

    #[test]
    fn split_size_rules() {
        assert_eq!(split_sizes(170, DEFAULT_RATIOS).unwrap(), [120, 25, 25]);
        assert_eq!(split_sizes(10, [0.6, 0.2, 0.2]).unwrap(), [6, 2, 2]);
        assert_eq!(split_sizes(20, DEFAULT_RATIOS).unwrap(), [16, 2, 2]);
        assert_eq!(split_sizes(5, DEFAULT_RATIOS).unwrap(), [3, 1, 1]);
        assert!(split_sizes(10, [0.5, 0.2, 0.2]).is_err());
        assert!(split_sizes(5, [0.9, 0.1, 0.0]).is_err());
        assert!(split_sizes(2, [0.4, 0.3, 0.3]).is_err());
    }

    #[test]
    fn partition_keeps_pairs_together() {
        let m = partition(&toy_manifest(10), [0.6, 0.2, 0.2]).unwrap();
        assert!(m.pair_split_violations().is_empty());
        let count = |s| m.records.iter().filter(|r| r.split == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (12, 4, 4));
        assert_eq!(m, partition(&toy_manifest(10), [0.6, 0.2, 0.2]).unwrap());
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = partition(&toy_manifest(4), [0.5, 0.25, 0.25]).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("#ttdf-manifest v1 seed=3 res=64\n"));
        assert_eq!(Manifest::parse(&text, PathBuf::new()).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_malformed() {
        assert!(Manifest::parse("", "").is_err());
        assert!(Manifest::parse("#other v1 seed=1 res=2\n", "").is_err());
        let dup = "#ttdf-manifest v1 seed=1 res=8\na\treal\tnone\tnone\tC23\ttrain\t0\t1\nb\treal\tnone\tnone\tC23\ttrain\t0\t1\n";
        assert!(Manifest::parse(dup, "").is_err());
        let bad_real = "#ttdf-manifest v1 seed=1 res=8\na\treal\tFAM-A\tnone\tC23\ttrain\t0\t1\n";
        assert!(Manifest::parse(bad_real, "").is_err());
    }

    #[test]
    fn enums_parse() {
        assert_eq!("FAM-B".parse::<Family>().unwrap(), Family::B);
        assert!("FAM-D".parse::<Family>().is_err());
        assert_eq!(Compression::parse_loose("c40").unwrap(), Compression::C40);
        assert_eq!(Compression::parse_loose("C23").unwrap(), Compression::C23);
        assert!(Compression::parse_loose("c30").is_err());
    }
}
