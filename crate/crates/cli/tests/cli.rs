use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;
use ttdf_core::corpus::{generate_real_video, Video};

fn ttdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttdf")).args(args).env_remove("TTDF_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path) {
    let o = ttdf(&["gen", "--pairs", "5", "--seed", "7", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Training logs without the wall-clock column.
fn log_without_time(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect()
}

#[test]
fn help_documents_every_flag() {
    let top = ttdf(&["--help"]);
    assert_eq!(code(&top), 0);
    for sub in ["gen", "train", "eval", "flow", "report"] {
        assert!(stdout(&top).contains(sub));
    }
    let expect: &[(&str, &[&str])] = &[
        ("gen", &["--pairs", "--seed", "--out", "--resolution", "--length", "--config", "--threads"]),
        (
            "train",
            &[
                "--corpus",
                "--out",
                "--resume",
                "--level",
                "--eval-k",
                "--epochs",
                "--batch-size",
                "--lr",
                "--weight-decay",
                "--seed",
                "--eval-every",
                "--class-balance",
                "--group-pairs",
                "--families",
                "--frames",
                "--patch",
                "--embed-dim",
                "--heads",
                "--st-blocks",
                "--mg-channels",
                "--mlp-hidden",
                "--branches",
                "--alpha",
                "--iters",
            ],
        ),
        ("eval", &["--corpus", "--checkpoint", "--protocol", "--level", "--eval-k", "--max-segment", "--out"]),
        ("flow", &["--input", "--out", "--alpha", "--iters"]),
        ("report", &["FILES"]),
    ];
    for (sub, flags) in expect {
        let o = ttdf(&[sub, "--help"]);
        assert_eq!(code(&o), 0);
        for f in *flags {
            assert!(stdout(&o).contains(f), "{sub} --help lacks {f}");
        }
    }
    assert_eq!(code(&ttdf(&["--version"])), 0);
    assert_eq!(code(&ttdf(&["gen", "--bogus"])), 1);
    assert_eq!(code(&ttdf(&[])), 1);
}

#[test]
fn gen_writes_the_corpus_deterministically() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let o = ttdf(&["gen", "--pairs", "5", "--seed", "7", "--out", p(a.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("140 videos"));
    let videos = fs::read_dir(a.path().join("videos")).unwrap().count();
    assert_eq!(videos, 140);
    gen(b.path());
    let manifest = |d: &Path| fs::read(d.join("manifest.tsv")).unwrap();
    assert_eq!(manifest(a.path()), manifest(b.path()));
    assert_eq!(
        fs::read(a.path().join("videos/000017.ttdv")).unwrap(),
        fs::read(b.path().join("videos/000017.ttdv")).unwrap()
    );

    let o = ttdf(&["gen", "--pairs", "2", "--out", p(&a.path().join("small"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("at least 5"));
    let o = ttdf(&["gen", "--seed", "1", "--out", p(a.path())]);
    assert_eq!(code(&o), 1, "missing --pairs");
}

#[test]
fn gen_reports_unwritable_output() {
    let d = TempDir::new().unwrap();
    let blocker = d.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = ttdf(&["gen", "--pairs", "5", "--out", p(&blocker.join("sub"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn config_files_feed_flags() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.cfg");
    let out = d.path().join("c");
    fs::write(&cfg, format!("# corpus\npairs = 5\nseed = 3\nout = {}\nresolution = 32\nlength = 12\n", out.display()))
        .unwrap();
    let o = ttdf(&["--config", p(&cfg), "gen"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = ttdf_core::corpus::Manifest::load(&out.join("manifest.tsv")).unwrap();
    assert_eq!((m.corpus_seed, m.resolution), (3, 32));
    // a flag beats the file
    let o = ttdf(&["--config", p(&cfg), "gen", "--pairs", "1"]);
    assert_eq!(code(&o), 1);

    fs::write(&cfg, "pairs = 5\ncolour = red\n").unwrap();
    let o = ttdf(&["--config", p(&cfg), "gen"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown key"));
    let o = ttdf(&["--config", p(&d.path().join("none.cfg")), "gen"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn train_smoke_run_and_eval() {
    let d = TempDir::new().unwrap();
    let corpus = d.path().join("corpus");
    gen(&corpus);
    let run = |out: &Path, extra: &[&str]| {
        let mut args =
            vec!["--threads", "2", "train", "--corpus", p(&corpus), "--out", p(out), "--epochs", "1", "--seed", "3"];
        args.extend_from_slice(extra);
        let t = Instant::now();
        let o = ttdf(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(t.elapsed().as_secs() < 300);
        o
    };
    let (r1, r2) = (d.path().join("r1"), d.path().join("r2"));
    let o = run(&r1, &[]);
    assert!(stdout(&o).contains("final val AUC"));
    run(&r2, &[]);
    for f in ["last.ttck", "best.ttck", "train_log.csv"] {
        assert!(r1.join(f).is_file(), "{f}");
    }
    assert_eq!(log_without_time(&r1.join("train_log.csv")), log_without_time(&r2.join("train_log.csv")));
    assert_eq!(fs::read(r1.join("best.ttck")).unwrap(), fs::read(r2.join("best.ttck")).unwrap());

    // resuming a finished one-epoch run for a second epoch appends to the log
    let o = ttdf(&[
        "train",
        "--corpus",
        p(&corpus),
        "--out",
        p(&r1),
        "--epochs",
        "2",
        "--seed",
        "3",
        "--resume",
        p(&r1.join("last.ttck")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = fs::read_to_string(r1.join("train_log.csv")).unwrap().lines().count();
    let one = fs::read_to_string(r2.join("train_log.csv")).unwrap().lines().count();
    assert_eq!(rows - 1, 2 * (one - 1));

    let csv = d.path().join("out/intra.csv");
    let o = ttdf(&[
        "eval",
        "--corpus",
        p(&corpus),
        "--checkpoint",
        p(&r2.join("best.ttck")),
        "--protocol",
        "intra",
        "--level",
        "c40",
        "--out",
        p(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "protocol,level,train_families,test_family,auc,acc,n_real,n_fake,seed");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("intra-segment,C40,"));
    assert!(lines[2].starts_with("intra-video,C40,"));

    let o = ttdf(&["eval", "--corpus", p(&corpus), "--checkpoint", p(&r2.join("best.ttck")), "--protocol", "cce"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("cce-") && l.contains(',')).count(), 2);

    let o = ttdf(&["eval", "--corpus", p(&corpus), "--checkpoint", p(&r2.join("best.ttck")), "--protocol", "roc"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("intra, cce, cme"));
    let o = ttdf(&["eval", "--corpus", p(&corpus), "--protocol", "intra"]);
    assert_eq!(code(&o), 1, "intra without a checkpoint");
    let o = ttdf(&["eval", "--corpus", p(&corpus), "--checkpoint", p(&d.path().join("none.ttck"))]);
    assert_eq!(code(&o), 3);
    fs::write(d.path().join("bad.ttck"), b"TTCK").unwrap();
    let o = ttdf(&["eval", "--corpus", p(&corpus), "--checkpoint", p(&d.path().join("bad.ttck"))]);
    assert_eq!(code(&o), 3);

    let o = ttdf(&["report", p(&csv), p(&r1.join("train_log.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("intra-segment"));
    assert!(stdout(&o).contains("2 epochs"));
    let o = ttdf(&["report", p(&r1.join("best.ttck"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn cme_emits_a_row_per_family() {
    let d = TempDir::new().unwrap();
    let corpus = d.path().join("corpus");
    let o = ttdf(&["gen", "--pairs", "5", "--seed", "2", "--resolution", "32", "--length", "12", "--out", p(&corpus)]);
    assert_eq!(code(&o), 0);
    let o = ttdf(&[
        "eval",
        "--corpus",
        p(&corpus),
        "--protocol",
        "cme",
        "--epochs",
        "1",
        "--embed-dim",
        "16",
        "--heads",
        "2",
        "--st-blocks",
        "1",
        "--mg-channels",
        "8,16",
        "--mlp-hidden",
        "16",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("cme-segment,")).map(String::from).collect();
    assert_eq!(rows.len(), 3);
    for (row, fam) in rows.iter().zip(["FAM-A", "FAM-B", "FAM-C"]) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[3], fam);
        assert!(!f[2].contains(fam));
    }
}

#[test]
fn train_rejects_missing_inputs() {
    let d = TempDir::new().unwrap();
    let o = ttdf(&["train", "--corpus", p(&d.path().join("nowhere")), "--out", p(&d.path().join("r"))]);
    assert_eq!(code(&o), 3);
    assert!(!d.path().join("r").exists(), "nothing is created before inputs are checked");
    let o = ttdf(&["train", "--out", p(d.path())]);
    assert_eq!(code(&o), 1);
    let o = ttdf(&["train", "--corpus", p(d.path()), "--out", p(d.path()), "--lr", "-1"]);
    assert_eq!(code(&o), 1);
}

fn write_video(path: &Path, v: &Video) {
    v.save(path).unwrap();
}

#[test]
fn flow_dumps_diagnostics() {
    let d = TempDir::new().unwrap();
    let moving = d.path().join("moving.ttdv");
    write_video(&moving, &generate_real_video(1, 9, 32).unwrap().video);
    let out = d.path().join("m");
    let o = ttdf(&["flow", "--input", p(&moving), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let count = |prefix: &str| {
        fs::read_dir(&out)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(prefix))
            .count()
    };
    assert_eq!((count("ofm_"), count("weight_"), count("flow_")), (8, 8, 8));
    let pgm = fs::read(out.join("weight_000.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 32\n255\n"));
    assert_eq!(pgm.len(), b"P5\n32 32\n255\n".len() + 32 * 32);
    assert!(pgm[13..].contains(&255));
    assert!(fs::read(out.join("ofm_000.ppm")).unwrap().starts_with(b"P6\n32 32\n255\n"));

    let still = d.path().join("still.ttdv");
    let frame: Vec<f32> = (0..3 * 16 * 16).map(|i| (i % 7) as f32 / 7.0).collect();
    write_video(&still, &Video::new(3, 3, 16, 16, frame.repeat(3)).unwrap());
    let out = d.path().join("s");
    assert_eq!(code(&ttdf(&["flow", "--input", p(&still), "--out", p(&out)])), 0);
    for t in 0..2 {
        let pgm = fs::read(out.join(format!("weight_{t:03}.pgm"))).unwrap();
        assert!(pgm[b"P5\n16 16\n255\n".len()..].iter().all(|&b| b == 0));
    }

    assert_eq!(code(&ttdf(&["flow", "--input", p(&d.path().join("none.ttdv")), "--out", p(&out)])), 3);
    fs::write(d.path().join("junk.ttdv"), b"not a video").unwrap();
    assert_eq!(code(&ttdf(&["flow", "--input", p(&d.path().join("junk.ttdv")), "--out", p(&out)])), 3);
}
