use std::path::Path;
use std::process::{Command, Output};

use oac_core::io::{pnm, read_checkpoint, Role};
use oac_core::pipeline::TrainConfig;
use oac_core::{Model, Tensor};

fn oac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oac")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Seconds-long training run.
fn train_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--out-dir",
        p(out),
        "--seed",
        "4",
        "--epochs",
        "2",
        "--steps-per-epoch",
        "3",
        "--batch-size",
        "4",
        "--set",
        "corpus_size=30",
        "--set",
        "validation_pairs=4",
        "--set",
        "bn_recalibration=2",
    ];
    args.extend_from_slice(extra);
    oac(&args)
}

#[test]
fn help_lists_the_documented_defaults() {
    let train = stdout(&oac(&["train", "--help"]));
    assert!(train.contains("2e-4") && train.contains("32"), "{train}");
    let eval = stdout(&oac(&["eval", "--help"]));
    assert!(eval.contains("[default: 0.1]"), "{eval}");
    assert_eq!(code(&oac(&["--help"])), 0);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&oac(&["train", "--bogus"])), 1);
    assert_eq!(code(&oac(&["check-equiv", "--dims", "4x4"])), 1);
    assert_eq!(code(&oac(&["eval", "--pairs", "3"])), 1);
}

#[test]
fn equivalence_check_passes_and_detects_a_corrupted_layout() {
    let ok = oac(&["check-equiv", "--dims", "4x4x2", "--trials", "100", "--seed", "1"]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("seed = 1"));
    assert_eq!(code(&oac(&["check-equiv", "--dims", "1x1x1"])), 0);
    let bad = oac(&["check-equiv", "--dims", "4x4x2", "--trials", "3", "--corrupt-layout"]);
    assert_ne!(code(&bad), 0);
}

#[test]
fn bench_reports_formula_and_instrumented_counts() {
    let o = oac(&["bench", "--dims", "15x15x128", "--dims", "1x1x1", "--dims", "8x8x16", "--repeats", "1"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("15x15x128,direct,6480000,6480000"), "{text}");
    assert!(text.contains("15x15x128,reordered,24220800,24220800"), "{text}");
    assert!(text.contains("1x1x1,direct,1,1") && text.contains("1x1x1,reordered,1,1"), "{text}");
    assert!(text.contains("8x8x16,reordered,230400,230400"), "{text}");
}

#[test]
fn training_rejects_missing_and_malformed_configs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let o = oac(&["train", "--config", p(&missing), "--out-dir", p(&dir.path().join("a"))]);
    assert_eq!(code(&o), 1);
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "learning_rate = 1e-3\nbatch_size = many\n").unwrap();
    let o = oac(&["train", "--config", p(&bad), "--out-dir", p(&dir.path().join("b"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"), "{o:?}");
}

#[test]
fn training_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = train_small(&a, &[]);
    assert_eq!(code(&oa), 0, "{oa:?}");
    assert!(stdout(&oa).contains("seed = 4"));
    assert!(stdout(&oa).contains("learning_rate = 2e-4"));
    assert_eq!(code(&train_small(&b, &[])), 0);
    for file in ["loss.csv", "train.txt", "checkpoint/manifest.txt", "checkpoint/config.txt"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert_eq!(x, y, "{file} differs");
    }
    for e in read_checkpoint(a.join("checkpoint")).unwrap() {
        let other = read_checkpoint(b.join("checkpoint")).unwrap().into_iter().find(|o| o.name == e.name).unwrap();
        assert!(e.tensor.data().iter().zip(other.tensor.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let csv = std::fs::read_to_string(a.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    let cfg = TrainConfig::read(a.join("train.txt")).unwrap();
    assert_eq!((cfg.seed(), cfg.total_steps()), (4, 6));
}

#[test]
fn zero_learning_rate_keeps_the_initial_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&train_small(&out, &["--lr", "0"])), 0);
    let cfg = TrainConfig::read(out.join("train.txt")).unwrap();
    let init = Model::new(cfg.model).unwrap().checkpoint_entries();
    let saved = read_checkpoint(out.join("checkpoint")).unwrap();
    for e in init.iter().filter(|e| e.role == Role::Param) {
        let s = saved.iter().find(|s| s.name == e.name).unwrap();
        assert_eq!(s.tensor.shape(), e.tensor.shape());
        assert!(s.tensor.data().iter().zip(e.tensor.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", e.name);
    }
}

#[test]
fn eval_reports_tgd_and_pck_and_dumps_attention() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&train_small(&run, &[])), 0);
    let ckpt = run.join("checkpoint");
    let att = dir.path().join("att");
    let o = oac(&["eval", "--checkpoint", p(&ckpt), "--pairs", "3", "--dump-attention", p(&att)]);
    assert_eq!(code(&o), 0, "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("TGD: mean") && text.contains("PCK@0.1") && text.contains("seed = 4"), "{text}");
    for i in 0..3 {
        assert!(att.join(format!("attention_{i:04}.csv")).exists());
        assert!(att.join(format!("attention_{i:04}.pgm")).exists());
    }
    // features of the wrong width for the checkpoint
    let csv = dir.path().join("kp.csv");
    std::fs::write(&csv, "a,10,10,12,12,50,50\n").unwrap();
    let feats = dir.path().join("feats");
    std::fs::create_dir_all(&feats).unwrap();
    let f = Tensor::filled(&[16, 5, 5], 0.25);
    oac_core::io::write_tensor(feats.join("a_source.oact"), &f).unwrap();
    oac_core::io::write_tensor(feats.join("a_target.oact"), &f).unwrap();
    let o = oac(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--keypoints-csv",
        p(&csv),
        "--image-size",
        "100x100",
        "--features-dir",
        p(&feats),
    ]);
    assert_eq!(code(&o), 1, "{o:?}");
}

#[test]
fn keypoint_pck_with_injected_transforms() {
    let dir = tempfile::tempdir().unwrap();
    // 101×101 frame: pixel x maps to x/50 - 1, so a shift of 0.1 in
    // normalised units moves keypoints by 5 px.
    let csv = dir.path().join("kp.csv");
    std::fs::write(
        &csv,
        "pair_id,src_x,src_y,trg_x,trg_y,bbox_h,bbox_w\n\
         p,20,20,25,20,100,100\n\
         p,40,40,48,40,100,100\n\
         p,60,60,71,60,100,100\n\
         p,80,80,97,80,100,100\n",
    )
    .unwrap();
    let oracle = dir.path().join("oracle.txt");
    std::fs::write(&oracle, "1 0 0.1 0 1 0\n").unwrap();
    let run = |thetas: &Path, alpha: &str| {
        let o = oac(&[
            "eval",
            "--keypoints-csv",
            p(&csv),
            "--image-size",
            "101x101",
            "--thetas",
            p(thetas),
            "--alpha",
            alpha,
        ]);
        assert_eq!(code(&o), 0, "{o:?}");
        stdout(&o)
    };
    // errors after the 5 px shift: 0, 3, 6, 12 px; thresholds 5, 10, 15 px
    let counts: Vec<String> = ["0.05", "0.1", "0.15"].iter().map(|a| run(&oracle, a)).collect();
    for (text, want) in counts.iter().zip(["(2/4 keypoints", "(3/4 keypoints", "(4/4 keypoints"]) {
        assert!(text.contains(want), "{text}");
    }
    let exact = dir.path().join("exact.csv");
    std::fs::write(&exact, "q,10,30,15,30,100,100\nq,70,50,75,50,100,100\n").unwrap();
    let o = oac(&[
        "eval",
        "--keypoints-csv",
        p(&exact),
        "--image-size",
        "101x101",
        "--thetas",
        p(&oracle),
    ]);
    assert!(stdout(&o).contains("PCK@0.1: 1.0000"), "{o:?}");
}

#[test]
fn warp_with_identity_and_translation() {
    let dir = tempfile::tempdir().unwrap();
    let ramp = Tensor::from_fn(&[1, 9, 17], |i| (i % 17) as f64 * 15.0 / 255.0);
    let input = dir.path().join("ramp.pgm");
    pnm::write(&input, &ramp).unwrap();
    let id = dir.path().join("id.txt");
    std::fs::write(&id, "1 0 0 0 1 0\n").unwrap();
    let out = dir.path().join("same.pgm");
    let o = oac(&["warp", "--image", p(&input), "--theta-file", p(&id), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(std::fs::read(&input).unwrap(), std::fs::read(&out).unwrap());
    // 0.25 normalised units across 17 columns is 2 px
    let shift = dir.path().join("shift.txt");
    std::fs::write(&shift, "1 0 0.25 0 1 0\n").unwrap();
    let moved = dir.path().join("moved.pgm");
    assert_eq!(code(&oac(&["warp", "--image", p(&input), "--theta-file", p(&shift), "--out", p(&moved)])), 0);
    let m = pnm::read(&moved).unwrap();
    for r in 0..9 {
        for c in 0..15 {
            assert!((m.at3(0, r, c) - ramp.at3(0, r, c + 2)).abs() < 1e-12, "({r},{c})");
        }
    }
}

#[test]
fn warp_visualises_a_checkpoint_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&train_small(&run, &[])), 0);
    let out = dir.path().join("vis");
    let o = oac(&["warp", "--checkpoint", p(&run.join("checkpoint")), "--pair", "2", "--out-dir", p(&out)]);
    assert_eq!(code(&o), 0, "{o:?}");
    for f in ["source.ppm", "target.ppm", "warped.ppm", "theta.txt", "attention_0002.pgm"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("attention_0002.csv")).unwrap();
    let total: f64 = csv.split([',', '\n']).filter(|t| !t.is_empty()).map(|t| t.parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12, "{total}");
}
