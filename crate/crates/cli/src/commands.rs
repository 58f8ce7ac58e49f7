use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ttdf_core::corpus::{
    build_corpus, Compression, Config, CorpusOptions, Family, Manifest, Split, Video, MANIFEST_FILE,
};
use ttdf_core::eval::protocol_ids;
use ttdf_core::eval::{reports_csv, reports_text, run_protocol, EvalOptions, MetricsReport, ModelSource, Protocol};
use ttdf_core::flow::viz::{flow_to_rgb, write_pgm, write_ppm};
use ttdf_core::flow::{ofm, weight_map, FlowEstimator, FlowParams, HornSchunck};
use ttdf_core::model::{BranchMode, ModelConfig};
use ttdf_core::training::{load_checkpoint, save_checkpoint, RunState, TrainConfig, TrainLog, Trainer, VideoStore};

use crate::fail::{Classify, Failure};
use crate::settings::Settings;
use crate::{EvalArgs, FlowArgs, FlowOpts, GenArgs, ModelArgs, OptimArgs, ReportArgs, TrainArgs};

fn usage<T>(r: ttdf_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::usage(e.to_string()))
}

fn parse_level(s: &str) -> Result<Compression, Failure> {
    usage(Compression::parse_loose(s))
}

fn parse_families(s: &str) -> Result<Vec<Family>, Failure> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let up = part.to_ascii_uppercase();
        let name = if up.starts_with("FAM-") { up } else { format!("FAM-{up}") };
        match name.parse::<Family>() {
            Ok(f) if f != Family::None => {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
            _ => return Err(Failure::usage(format!("unknown family {part:?} (FAM-A, FAM-B, FAM-C)"))),
        }
    }
    if out.is_empty() {
        return Err(Failure::usage("no families given"));
    }
    out.sort();
    Ok(out)
}

fn parse_protocols(s: &str) -> Result<Vec<Protocol>, Failure> {
    if s == "all" {
        return Ok(vec![Protocol::Intra, Protocol::Cce, Protocol::Cme]);
    }
    s.split(',').map(|p| usage(p.trim().parse::<Protocol>())).collect()
}

fn flow_params(s: &Settings, a: &FlowOpts) -> Result<FlowParams, Failure> {
    let d = FlowParams::default();
    let p = FlowParams { alpha: s.or("alpha", a.alpha, d.alpha)?, iters: s.or("iters", a.iters, d.iters)? };
    if !(p.alpha.is_finite() && p.alpha > 0.0) || p.iters == 0 {
        return Err(Failure::usage("alpha and iters must be positive"));
    }
    Ok(p)
}

fn model_config(s: &Settings, a: &ModelArgs, resolution: usize) -> Result<ModelConfig, Failure> {
    let d = ModelConfig::default();
    let mg_channels = match s.get::<String>("mg_channels", a.mg_channels.clone())? {
        None => d.mg_channels.clone(),
        Some(list) => list
            .split(',')
            .map(|c| c.trim().parse::<usize>().map_err(|_| Failure::usage(format!("bad mg_channels {list:?}"))))
            .collect::<Result<_, _>>()?,
    };
    let branches = match s.get::<String>("branches", a.branches.clone())? {
        None => d.branches,
        Some(b) => usage(BranchMode::parse(&b))?,
    };
    let cfg = ModelConfig {
        frames: s.or("frames", a.frames, d.frames)?,
        patch: s.or("patch", a.patch, d.patch)?,
        embed_dim: s.or("embed_dim", a.embed_dim, d.embed_dim)?,
        heads: s.or("heads", a.heads, d.heads)?,
        st_blocks: s.or("st_blocks", a.st_blocks, d.st_blocks)?,
        mg_channels,
        mlp_hidden: s.or("mlp_hidden", a.mlp_hidden, d.mlp_hidden)?,
        resolution,
        branches,
    };
    usage(cfg.validate())?;
    Ok(cfg)
}

fn train_config(s: &Settings, a: &OptimArgs, eval_k: usize) -> Result<(TrainConfig, Vec<Family>), Failure> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: s.or("epochs", a.epochs, d.epochs)?,
        batch_size: s.or("batch_size", a.batch_size, d.batch_size)?,
        lr: s.or("lr", a.lr, d.lr)?,
        weight_decay: s.or("weight_decay", a.weight_decay, d.weight_decay)?,
        seed: s.or("seed", a.seed, d.seed)?,
        eval_every: s.or("eval_every", a.eval_every, d.eval_every)?,
        class_balance: s.or("class_balance", a.class_balance, d.class_balance)?,
        group_pairs: s.or("group_pairs", a.group_pairs, d.group_pairs)?,
        eval_k,
        ..d
    };
    usage(cfg.validate())?;
    let families = match s.get::<String>("families", a.families.clone())? {
        None => Family::FORGED.to_vec(),
        Some(f) => parse_families(&f)?,
    };
    Ok((cfg, families))
}

/// Accepts a corpus directory or the manifest file itself.
fn open_manifest(path: &Path) -> Result<Manifest, Failure> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    if !file.is_file() {
        return Err(Failure::input(format!("no manifest at {}", file.display())));
    }
    Manifest::load(&file).reading("manifest")
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).writing(&format!("cannot create {}", dir.display()))
}

pub fn gen(s: &Settings, a: &GenArgs) -> Result<(), Failure> {
    let d = CorpusOptions::default();
    let pairs: usize = s.require("pairs", a.pairs)?;
    let seed: u64 = s.or("seed", a.seed, 0)?;
    let out: PathBuf = s.require("out", a.out.clone())?;
    let opts = CorpusOptions {
        resolution: s.or("resolution", a.resolution, d.resolution)?,
        length: s.or("length", a.length, d.length)?,
        ..d
    };
    let manifest = build_corpus(pairs, seed, &out, &opts).writing("gen")?;
    println!("{:<5} {:<6} {:<9} {:<4} {:<5} {:>6}", "label", "family", "config", "lvl", "split", "videos");
    for ((label, family, config, level, split), n) in manifest.counts() {
        println!(
            "{:<5} {:<6} {:<9} {:<4} {:<5} {n:>6}",
            label.as_str(),
            family.as_str(),
            config.as_str(),
            level.as_str(),
            split.as_str()
        );
    }
    println!("{} videos, manifest {}", manifest.records.len(), out.join(MANIFEST_FILE).display());
    Ok(())
}

pub fn train(s: &Settings, a: &TrainArgs) -> Result<(), Failure> {
    let corpus: PathBuf = s.require("corpus", a.corpus.clone())?;
    let out: PathBuf = s.require("out", a.out.clone())?;
    let level = parse_level(&s.or("level", a.level.clone(), "c40".to_string())?)?;
    let eval_k = s.or("eval_k", a.eval_k, 4)?;
    let (cfg, families) = train_config(s, &a.optim, eval_k)?;
    let flow = flow_params(s, &a.flow)?;
    let resume: Option<PathBuf> = s.get("resume", a.resume.clone())?;
    if let Some(r) = &resume {
        if !r.is_file() {
            return Err(Failure::input(format!("no checkpoint at {}", r.display())));
        }
    }
    let manifest = open_manifest(&corpus)?;
    let model = model_config(s, &a.model, manifest.resolution as usize)?;
    create_dir(&out)?;

    let train_ids = protocol_ids(&manifest, Split::Train, level, Config::Match, &families);
    let val_ids = protocol_ids(&manifest, Split::Val, level, Config::Match, &families);
    let store = VideoStore::new(manifest, flow);
    let log_path = out.join("train_log.csv");
    let mut trainer = match &resume {
        Some(r) => {
            let (params, state) = load_checkpoint(r).reading("resume checkpoint")?;
            let state = state.ok_or_else(|| Failure::input(format!("{} holds no run state", r.display())))?;
            Trainer::resume(&store, &train_ids, &val_ids, &cfg, params, state).reading("resume")?
        }
        None => {
            if log_path.exists() {
                fs::remove_file(&log_path).writing("old train log")?;
            }
            Trainer::new(&store, &train_ids, &val_ids, &model, &cfg).reading("training data")?
        }
    };
    trainer.log_to(&log_path).writing("train log")?;
    eprintln!(
        "training {} on {} videos ({} validation), {} steps per epoch",
        trainer.params().config.branches.name(),
        train_ids.len(),
        val_ids.len(),
        trainer.steps_per_epoch()
    );
    let last_path = out.join("last.ttck");
    let mut losses = Vec::new();
    while let Some(loss) = trainer.step().reading("training")? {
        losses.push(loss);
        let row = trainer.log().rows.last().unwrap();
        if let (Some(auc), Some(acc)) = (row.val_auc, row.val_acc) {
            let mean = losses.iter().sum::<f32>() / losses.len() as f32;
            losses.clear();
            eprintln!("epoch {:>3} step {:>5}  loss {mean:.4}  val AUC {auc:.4} Acc {acc:.4}", row.epoch, row.step);
            save_checkpoint(&last_path, trainer.params(), Some(trainer.state())).writing("checkpoint")?;
        }
    }
    save_checkpoint(&last_path, trainer.params(), Some(trainer.state())).writing("checkpoint")?;
    let final_row = trainer.log().rows.iter().rev().find(|r| r.val_auc.is_some()).cloned();
    let done = trainer.finish();
    save_checkpoint(&out.join("best.ttck"), &done.best, None).writing("checkpoint")?;
    if let Some(r) = final_row {
        println!(
            "final val AUC {:.4} Acc {:.4}; best val AUC {:.4}",
            r.val_auc.unwrap(),
            r.val_acc.unwrap(),
            done.best_val_auc().unwrap_or(f64::NAN)
        );
    }
    println!("wrote {} and {}", last_path.display(), out.join("best.ttck").display());
    Ok(())
}

fn state_free(p: &Path) -> Result<ttdf_core::ModelParams, Failure> {
    if !p.is_file() {
        return Err(Failure::input(format!("no checkpoint at {}", p.display())));
    }
    let (params, _): (_, Option<RunState>) = load_checkpoint(p).reading("checkpoint")?;
    Ok(params)
}

pub fn eval(s: &Settings, a: &EvalArgs) -> Result<(), Failure> {
    let corpus: PathBuf = s.require("corpus", a.corpus.clone())?;
    let protocols = parse_protocols(&s.or("protocol", a.protocol.clone(), "intra".to_string())?)?;
    let level = parse_level(&s.or("level", a.level.clone(), "c40".to_string())?)?;
    let d = EvalOptions::default();
    let opts = EvalOptions {
        level,
        eval_k: s.or("eval_k", a.eval_k, d.eval_k)?,
        max_segment: s.or("max_segment", a.max_segment, d.max_segment)?,
    };
    let checkpoint: Option<PathBuf> = s.get("checkpoint", a.checkpoint.clone())?;
    let needs_params = protocols.iter().any(|p| *p != Protocol::Cme);
    if needs_params && checkpoint.is_none() {
        return Err(Failure::usage("intra and cce evaluate a trained model; pass --checkpoint"));
    }
    let params = checkpoint.as_deref().map(state_free).transpose()?;
    let manifest = open_manifest(&corpus)?;
    if let Some(p) = &params {
        if p.config.resolution != manifest.resolution as usize {
            return Err(Failure::usage(format!(
                "checkpoint expects {}px frames, corpus has {}px",
                p.config.resolution, manifest.resolution
            )));
        }
    }
    let out: Option<PathBuf> = s.get("out", a.out.clone())?;
    if let Some(dir) = out.as_ref().and_then(|o| o.parent()).filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let flow = flow_params(s, &a.flow)?;
    let model = match &params {
        Some(p) => p.config.clone(),
        None => model_config(s, &a.model, manifest.resolution as usize)?,
    };
    let (train_cfg, _) = train_config(s, &a.optim, opts.eval_k)?;
    let store = VideoStore::new(manifest, flow);

    let mut reports: Vec<MetricsReport> = Vec::new();
    for protocol in protocols {
        let source = match (&params, protocol) {
            (Some(p), Protocol::Intra | Protocol::Cce) => ModelSource::Params { params: p, seed: train_cfg.seed },
            _ => ModelSource::Train { model: model.clone(), train: train_cfg.clone() },
        };
        if protocol == Protocol::Cme {
            eprintln!("cme: training three models, one per held-out family");
        }
        let runs = run_protocol(&store, protocol, &source, &opts).reading(protocol.as_str())?;
        for run in runs {
            // cce repeats the intra rows; keep each row once
            for r in run.reports {
                if !reports.contains(&r) {
                    reports.push(r);
                }
            }
        }
    }
    print!("{}", reports_text(&reports));
    let csv = reports_csv(&reports);
    match out {
        Some(path) => fs::write(&path, csv).writing(&format!("cannot write {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> ttdf_core::Result<()>) -> Result<(), Failure> {
    let what = format!("cannot write {}", path.display());
    let mut w = BufWriter::new(File::create(path).writing(&what)?);
    f(&mut w).writing(&what)?;
    w.flush().writing(&what)
}

pub fn flow(s: &Settings, a: &FlowArgs) -> Result<(), Failure> {
    let input: PathBuf = s.require("input", a.input.clone())?;
    let out: PathBuf = s.require("out", a.out.clone())?;
    let params = flow_params(s, &a.flow)?;
    let video = Video::load(&input).reading(&format!("cannot read {}", input.display()))?;
    if video.frames < 2 {
        return Err(Failure::input(format!("{} has {} frame(s); flow needs two", input.display(), video.frames)));
    }
    create_dir(&out)?;
    let hs = HornSchunck::new(params);
    let frames = video.frame_images();
    let flows = hs.estimate_sequence(&frames).reading("flow")?;
    for (t, f) in flows.iter().enumerate() {
        let w = weight_map(f);
        let motion = ofm(&frames[t], &w).reading("ofm")?;
        write_file(&out.join(format!("weight_{t:03}.pgm")), |o| write_pgm(o, &w))?;
        write_file(&out.join(format!("flow_{t:03}.ppm")), |o| write_ppm(o, &flow_to_rgb(f)))?;
        write_file(&out.join(format!("ofm_{t:03}.ppm")), |o| write_ppm(o, &motion))?;
    }
    println!("{} motion-guided frames from {} frames written to {}", flows.len(), video.frames, out.display());
    Ok(())
}

fn summarize_log(path: &Path, log: &TrainLog) {
    let Some(last) = log.rows.last() else {
        println!("{}: empty training log", path.display());
        return;
    };
    let best = log.rows.iter().filter_map(|r| r.val_auc.map(|a| (a, r.step))).fold(None, |b: Option<(f64, u64)>, x| {
        if b.is_none_or(|b| x.0 > b.0) {
            Some(x)
        } else {
            b
        }
    });
    print!(
        "{}: {} steps, {} epochs, final loss {:.4}, {:.0} s",
        path.display(),
        last.step,
        last.epoch,
        last.loss,
        last.seconds
    );
    match best {
        Some((auc, step)) => println!(", best val AUC {auc:.4} at step {step}"),
        None => println!(),
    }
}

fn print_metrics(path: &Path, text: &str) -> Result<(), Failure> {
    println!("{}:", path.display());
    let rows: Vec<Vec<&str>> = text.lines().filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect();
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Failure::input(format!("{}: ragged CSV", path.display())));
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        println!("  {}", cells.join("  ").trim_end());
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<(), Failure> {
    for path in &a.files {
        let text = fs::read_to_string(path).reading(&format!("cannot read {}", path.display()))?;
        let header = text.lines().next().unwrap_or("");
        if header == MetricsReport::CSV_HEADER {
            print_metrics(path, &text)?;
        } else if header == TrainLog::HEADER {
            let log = TrainLog::parse_csv(&text).reading(&path.display().to_string())?;
            summarize_log(path, &log);
        } else {
            return Err(Failure::input(format!("{}: neither a metrics CSV nor a training log", path.display())));
        }
    }
    Ok(())
}
