use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn jcif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jcif")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = jcif(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sha_line(stdout: &str) -> String {
    stdout.lines().find(|l| l.contains("sha256")).unwrap().split_whitespace().last().unwrap().to_string()
}

/// A small dataset, one stage-1 and one stage-2 checkpoint and an archive,
/// shared by the tests that only read them.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    stage1: PathBuf,
    stage2: PathBuf,
    archive: PathBuf,
    index: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let stage1 = dir.path().join("s1.ckpt");
    let stage2 = dir.path().join("s2.ckpt");
    let archive = dir.path().join("test.jcar");
    let index = dir.path().join("test.jcix");
    ok(&["gen-data", "--out", p(&data), "--n", "60", "--seed", "3", "--size", "16"]);
    ok(&["train", "--stage", "1", "--data", p(&data), "--out", p(&stage1), "--steps", "4", "--batch", "4"]);
    ok(&["train", "--stage", "2", "--data", p(&data), "--checkpoint", p(&stage1), "--out", p(&stage2), "--steps", "3", "--batch", "4", "--bits", "16"]);
    ok(&["compress", "--data", p(&data), "--checkpoint", p(&stage2), "--out", p(&archive)]);
    ok(&["index", "--archive", p(&archive), "--out", p(&index)]);
    Fixture { _dir: dir, data, stage1, stage2, archive, index }
}

fn test_ids(data: &Path) -> Vec<u64> {
    std::fs::read_to_string(data.join("manifest.csv"))
        .unwrap()
        .lines()
        .filter(|l| l.split(',').nth(2) == Some("test"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn gen_data_reports_splits_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(&["gen-data", "--out", p(&dir.path().join("a")), "--n", "100", "--seed", "7"]);
    assert!(a.contains("train 52 val 24 test 24"), "{a}");
    let b = ok(&["gen-data", "--out", p(&dir.path().join("b")), "--n", "100", "--seed", "7"]);
    assert_eq!(sha_line(&a), sha_line(&b));
    let empty = ok(&["gen-data", "--out", p(&dir.path().join("c")), "--n", "0"]);
    assert!(empty.contains("images 0"));
}

#[test]
fn stage_two_without_checkpoint_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", p(&data), "--n", "10", "--size", "16"]);
    let out = jcif(&["train", "--stage", "2", "--data", p(&data), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));
}

#[test]
fn bad_flags_and_missing_inputs_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&jcif(&["train", "--stage", "3", "--data", "x", "--out", "y"])), 2);
    assert_eq!(code(&jcif(&["gen-data"])), 2);
    let missing = jcif(&["train", "--stage", "1", "--data", p(&dir.path().join("nope")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&missing), 1);
    let garbage = dir.path().join("garbage.jcar");
    std::fs::write(&garbage, b"not an archive").unwrap();
    assert_eq!(code(&jcif(&["index", "--archive", p(&garbage), "--out", p(&dir.path().join("i"))])), 4);
}

#[test]
fn stage_one_training_is_deterministic_and_logs_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "--out", p(&data), "--n", "30", "--size", "16", "--seed", "7"]);
    let run = |name: &str| ok(&["train", "--stage", "1", "--data", p(&data), "--out", p(&dir.path().join(name)), "--steps", "5", "--seed", "7", "--batch", "4"]);
    let a = run("a.ckpt");
    let b = run("b.ckpt");
    assert_eq!(sha_line(&a), sha_line(&b));
    let log = std::fs::read_to_string(dir.path().join("a.ckpt.log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "step,stage,L_C,L_p,L_b,L_c,bpp,psnr");
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| l.split(',').count() == 8));
}

#[test]
fn archive_pipeline_end_to_end() {
    let f = fixture();
    let ids = test_ids(&f.data);
    assert!(!ids.is_empty());

    for id in &ids {
        let out = ok(&["decompress", "--archive", p(&f.archive), "--checkpoint", p(&f.stage2), "--id", &id.to_string(), "--data", p(&f.data)]);
        assert!(out.contains("decodes 1") && out.contains("psnr"), "{out}");
    }
    let recon = f._dir.path().join("r.jctf");
    ok(&["decompress", "--archive", p(&f.archive), "--checkpoint", p(&f.stage2), "--id", &ids[0].to_string(), "--out", p(&recon)]);
    assert!(recon.is_file());
    let unknown = jcif(&["decompress", "--archive", p(&f.archive), "--checkpoint", p(&f.stage2), "--id", "999999"]);
    assert_eq!(code(&unknown), 3);

    // self-query: distance 0 and the query's own id inside the distance-0 group
    let q = ok(&["query", "--index", p(&f.index), "--checkpoint", p(&f.stage2), "--id", &ids[1].to_string(), "--data", p(&f.data), "--top-k", "100"]);
    let rows: Vec<(u64, u32)> = q
        .lines()
        .skip(1)
        .filter(|l| l.split(',').count() == 3)
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            (v[1].parse().unwrap(), v[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows[0].1, 0);
    assert!(rows.iter().take_while(|r| r.1 == 0).any(|r| r.0 == ids[1]));
    assert!(q.contains("decodes 0"));

    let top5 = ok(&["query", "--index", p(&f.index), "--checkpoint", p(&f.stage2), "--id", &ids[1].to_string(), "--data", p(&f.data), "--top-k", "5"]);
    assert!(top5.lines().filter(|l| l.split(',').count() == 3).count() - 1 <= 5);

    let out_dir = f._dir.path().join("eval");
    ok(&["evaluate", "--data", p(&f.data), "--checkpoint", p(&f.stage2), "--archive", p(&f.archive), "--out", p(&out_dir), "--k", "5"]);
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "path,k,P@k,R@k,mAP,queries,seconds,decodes");
    for (line, name) in lines[1..].iter().zip(["joint", "standard"]) {
        let v: Vec<&str> = line.split(',').collect();
        assert_eq!(v[0], name);
        for m in &v[2..5] {
            assert!((0.0..=1.0).contains(&m.parse::<f64>().unwrap()));
        }
        assert!(v[6].parse::<f64>().unwrap() > 0.0);
    }
    assert!(lines[1].ends_with(",0"));
    assert!(lines[2].ends_with(&format!(",{}", ids.len())));
    for name in ["joint_queries.csv", "standard_queries.csv"] {
        let t = std::fs::read_to_string(out_dir.join(name)).unwrap();
        assert_eq!(t.lines().next(), Some("query_id,P@k,R@k,AP,seconds"));
    }
}

#[test]
fn code_length_mismatch_exits_with_four() {
    let f = fixture();
    let other = f._dir.path().join("s2_8bit.ckpt");
    ok(&["train", "--stage", "2", "--data", p(&f.data), "--checkpoint", p(&f.stage1), "--out", p(&other), "--steps", "1", "--batch", "4", "--bits", "8"]);
    let ids = test_ids(&f.data);
    let out = jcif(&["query", "--index", p(&f.index), "--checkpoint", p(&other), "--id", &ids[0].to_string(), "--data", p(&f.data)]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let ev = jcif(&["evaluate", "--data", p(&f.data), "--checkpoint", p(&other), "--archive", p(&f.archive), "--out", p(&f._dir.path().join("e"))]);
    assert_eq!(code(&ev), 4);
    // a stage-1 checkpoint has no head to hash with
    let s1 = jcif(&["compress", "--data", p(&f.data), "--checkpoint", p(&f.stage1), "--out", p(&f._dir.path().join("x.jcar"))]);
    assert_eq!(code(&s1), 2);
}

#[test]
fn rd_curve_lists_missing_checkpoints_and_sorts_by_rate() {
    let f = fixture();
    let missing = f._dir.path().join("absent.ckpt");
    let out = jcif(&["rd-curve", "--data", p(&f.data), "--checkpoints", p(&f.stage1), p(&missing), "--out", p(&f._dir.path().join("rd.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.ckpt"));

    let other = f._dir.path().join("s1b.ckpt");
    ok(&["train", "--stage", "1", "--data", p(&f.data), "--out", p(&other), "--steps", "4", "--batch", "4", "--lambda-setting", "3"]);
    let rd = f._dir.path().join("rd.csv");
    ok(&["rd-curve", "--data", p(&f.data), "--checkpoints", p(&f.stage1), p(&other), "--out", p(&rd)]);
    let text = std::fs::read_to_string(&rd).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,bpp,psnr");
    assert_eq!(lines.len(), 3);
    let bpp: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(bpp[0] <= bpp[1]);
}

#[test]
fn compress_reports_rate_close_to_the_model_estimate() {
    let f = fixture();
    let out = ok(&["compress", "--data", p(&f.data), "--checkpoint", p(&f.stage2), "--out", p(&f._dir.path().join("again.jcar"))]);
    let field = |name: &str| -> f64 {
        let words: Vec<&str> = out.split_whitespace().collect();
        let i = words.iter().position(|w| *w == name).unwrap();
        words[i + 1].parse().unwrap()
    };
    let images = field("images");
    let bpp = field("bpp");
    let est = out.split("estimated bpp ").nth(1).unwrap().split_whitespace().next().unwrap().parse::<f64>().unwrap();
    let pixels = images * 16.0 * 16.0;
    assert!(bpp * pixels <= est * pixels * 1.02 + 64.0 * images, "{out}");
    // identical inputs give an identical archive
    assert_eq!(std::fs::read(f._dir.path().join("again.jcar")).unwrap(), std::fs::read(&f.archive).unwrap());
}
