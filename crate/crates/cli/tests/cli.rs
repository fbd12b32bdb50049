use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn everest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_everest")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = everest(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn count_pgm(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name().into_string().unwrap();
            name.starts_with("frame_") && name.ends_with(".pgm")
        })
        .count()
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    ok(&["synth", "--kind", "moving-squares", "--frames", "4", "--size", "32x32", "--seed", "3", "--out", p(&seq)]);
    assert_eq!(count_pgm(&seq), 4);
    assert!(seq.join("roi.pgm").exists());

    let deg = tmp.path().join("deg");
    ok(&["degrade", "--in", p(&seq), "--out", p(&deg), "--budget", "200", "--roi", p(&seq.join("roi.pgm"))]);
    assert_eq!(count_pgm(&deg), 4);

    let events = tmp.path().join("events.txt");
    let msg = ok(&["simulate-events", "--in", p(&seq), "--out", p(&events)]);
    assert!(msg.ends_with("events\n"));
    assert!(fs::read_to_string(&events).unwrap().lines().count() > 0);

    let config = tmp.path().join("train.cfg");
    let log = tmp.path().join("log.csv");
    fs::write(&config, format!("budgets = 200\ncrop = 16\nbatch = 2\niterations = 3\nlog = {}\n", p(&log))).unwrap();
    let model = tmp.path().join("model.evrn");
    ok(&["train", "--config", p(&config), "--data", p(&seq), "--out", p(&model)]);
    assert_eq!(&fs::read(&model).unwrap()[..4], b"EVRN");
    let log_text = fs::read_to_string(&log).unwrap();
    assert_eq!(log_text.lines().next(), Some("iteration,loss"));
    assert_eq!(log_text.lines().count(), 4);

    let out = tmp.path().join("restored");
    let report = tmp.path().join("report.csv");
    let summary = ok(&[
        "restore", "--model", p(&model), "--in", p(&seq), "--budget", "200", "--roi-rect", "4,4,16,16", "--out", p(&out),
        "--report", p(&report),
    ]);
    assert!(summary.contains("PSNR: "));
    assert_eq!(count_pgm(&out), 3);
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("frame_index,psnr_degraded"));
    assert_eq!(csv.lines().count(), 4);

    // same restoration from pre-degraded frames plus the event file
    let out2 = tmp.path().join("restored2");
    let report2 = tmp.path().join("report2.csv");
    ok(&[
        "restore", "--model", p(&model), "--in", p(&deg), "--events", p(&events), "--truth", p(&seq), "--roi-rect",
        "4,4,16,16", "--out", p(&out2), "--report", p(&report2),
    ]);
    assert_eq!(count_pgm(&out2), 3);

    let eval = tmp.path().join("eval.csv");
    ok(&["evaluate", "--a", p(&seq), "--b", p(&deg), "--report", p(&eval)]);
    let eval_csv = fs::read_to_string(&eval).unwrap();
    assert_eq!(eval_csv.lines().next(), Some("frame_index,psnr,ssim,psnr_roi,ssim_roi"));
    assert_eq!(eval_csv.lines().count(), 5);
}

#[test]
fn fresh_model_restores_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    ok(&["synth", "--frames", "3", "--size", "32x40", "--out", p(&seq)]);
    let model = tmp.path().join("m.evrn");
    let params = everest::nn::ModelParams::<f64>::init(everest::nn::Architecture::default(), 5);
    everest::nn::save_checkpoint(&params, None, &model).unwrap();
    let report = tmp.path().join("r.csv");
    ok(&["restore", "--model", p(&model), "--in", p(&seq), "--budget", "150", "--out", p(&tmp.path().join("o")), "--report", p(&report)]);
    for line in fs::read_to_string(&report).unwrap().lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], cols[3], "{line}");
    }
}

#[test]
fn errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    ok(&["synth", "--frames", "2", "--size", "32x32", "--out", p(&seq)]);
    let bad_budget = everest(&["degrade", "--in", p(&seq), "--out", p(&tmp.path().join("d")), "--budget", "3"]);
    assert!(!bad_budget.status.success());
    assert!(String::from_utf8_lossy(&bad_budget.stderr).contains("budget"));

    assert!(!everest(&["synth", "--size", "16x16", "--out", p(&tmp.path().join("s"))]).status.success());
    assert!(!everest(&["synth", "--kind", "spirals", "--out", p(&tmp.path().join("s"))]).status.success());

    let junk = tmp.path().join("junk.evrn");
    fs::write(&junk, b"nope").unwrap();
    let r = everest(&["restore", "--model", p(&junk), "--in", p(&seq), "--budget", "100", "--out", p(&tmp.path().join("o"))]);
    assert!(!r.status.success());

    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "crop = 4\n").unwrap();
    let t = everest(&["train", "--config", p(&cfg), "--data", p(&seq), "--out", p(&tmp.path().join("m"))]);
    assert!(!t.status.success());
}
