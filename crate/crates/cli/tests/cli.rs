use std::path::Path;
use std::process::{Command, Output};

use beamsparse::{synth_channel, ChannelParams, SystemConfig};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsparse"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn cost_prints_reference_reductions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&run(tmp.path(), &["cost", "--full-scale", "--symbols", "5"]));
    for frac in ["28.125% (9/32)", "40.625% (13/32)", "53.125% (17/32)", "11520"] {
        assert!(out.contains(frac), "missing {frac} in\n{out}");
    }
    assert!(out.contains("measured"));
}

#[test]
fn sweep_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sweep", "--trials", "2", "--snr", "-6,6", "--k-s", "16,8", "--out", "res"];
    stdout(&run(a.path(), &args));
    stdout(&run(b.path(), &args));
    let fa = files(&a.path().join("res"));
    assert_eq!(fa.len(), 2);
    assert_eq!(fa, files(&b.path().join("res")));
    let csv = String::from_utf8(fa.iter().find(|(n, _)| n.starts_with("sweep_")).unwrap().1.clone()).unwrap();
    assert!(csv.starts_with(
        "algo,snr_db,k_s,seed,wsr_bits,gap_vs_wmmse,iters_to_tol,sparse_total_mults,dense_total_mults"
    ));
}

#[test]
fn converge_uses_config_and_channel_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SystemConfig::uniform(16, 2, 2, 1, 8).with_seed(5);
    let ch = synth_channel(&cfg, &ChannelParams::default()).unwrap();
    ch.save(&tmp.path().join("ch.txt")).unwrap();
    std::fs::write(
        tmp.path().join("sc.cfg"),
        "# small run\nm = 16\nusers = 2\nn_k = 2\nd_k = 1\nk_s = 8\nsnr_db = 10\ntrials = 1\nalgorithms = wmmse,allsp\n",
    )
    .unwrap();
    let out = stdout(&run(
        tmp.path(),
        &["converge", "--config", "sc.cfg", "--channel-file", "ch.txt", "--out", "o"],
    ));
    assert!(out.contains("wmmse") && out.contains("allsp") && !out.contains("aullsp"));
    let names: Vec<String> = files(&tmp.path().join("o")).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), 3, "{names:?}");
}

#[test]
fn mismatched_channel_file_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SystemConfig::uniform(8, 2, 1, 1, 4);
    synth_channel(&cfg, &ChannelParams::default())
        .unwrap()
        .save(&tmp.path().join("ch.txt"))
        .unwrap();
    let o = run(tmp.path(), &["converge", "--channel-file", "ch.txt"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.cfg"), "m = 16\nbogus = 1\n").unwrap();
    let o = run(tmp.path(), &["sweep", "--config", "bad.cfg"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn oracle_writes_per_support_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&run(tmp.path(), &["oracle", "--seed", "2", "--out", "o"]));
    assert!(out.contains("20 candidates"), "{out}");
    let (_, body) = files(&tmp.path().join("o")).pop().unwrap();
    let text = String::from_utf8(body).unwrap();
    assert!(text.starts_with("support,wsr_bits\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn complexity_reports_slopes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&run(tmp.path(), &["complexity", "--out", "o"]));
    assert!(out.contains("allsp    slope 1.000"));
    assert!(tmp.path().join("o/complexity.csv").exists());
}
