use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn necc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_necc"))
        .args(args)
        .env_remove("NECC_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/llm").join(name)
}

fn write_reqs(dir: &Path, text: &str, upload: &str) -> PathBuf {
    let out = dir.join("requirements.toml");
    let o = necc(&["model", "--text", text, "--upload", upload, "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

/// The single run directory created under `out_dir`.
fn run_dir(out_dir: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out_dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn model_prints_requirements() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r.toml");
    let o = necc(&["model", "--text", "2K resolution 60fps streaming", "--upload", "80", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for want in ["16 Mbps", "40 Mbps", "5%"] {
        assert!(text.contains(want), "{text}");
    }
    let file = std::fs::read_to_string(&out).unwrap();
    assert!(file.contains("r1_min_throughput_mbps = 16.0"), "{file}");
    assert!(file.contains("r2_max_throughput_mbps = 40.0"), "{file}");
}

#[test]
fn infeasible_requirements_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r.toml");
    let o = necc(&["model", "--text", "4K resolution 60Hz at 30Mbps bitrate", "--upload", "50", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("30"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = write_reqs(tmp.path(), "HD streaming", "60");
    let o = necc(&["generate", "--requirements", s(&reqs), "--base", "bbr", "--out-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("bbr"));
    assert_eq!(necc(&["model", "--upload", "10"]).status.code(), Some(1));
    assert_eq!(necc(&["no-such-verb"]).status.code(), Some(1));
}

#[test]
fn generate_report_deploy() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = write_reqs(tmp.path(), "1080p resolution streaming using h.265", "60");
    let runs = tmp.path().join("runs");
    let o = necc(&[
        "--pool-size",
        "2",
        "generate",
        "--requirements",
        s(&reqs),
        "--base",
        "reno",
        "--out-dir",
        s(&runs),
        "--fault",
        "0:COMPILE_FAULT",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = run_dir(&runs);
    assert!(run.join("manifest.json").exists());
    let manifest = std::fs::read_to_string(run.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"SUCCEEDED\""), "{manifest}");

    for table in ["cdf", "pool-curve", "history", "measurements"] {
        let o = necc(&["report", "--run", s(&run), "--table", table]);
        assert!(o.status.success(), "{table}: {}", stderr(&o));
        assert!(!stdout(&o).trim().is_empty(), "{table}");
    }
    let cdf = stdout(&necc(&["report", "--run", s(&run), "--table", "cdf"]));
    let last = cdf.lines().last().unwrap();
    assert!(last.trim_end().ends_with('1') || last.contains("1.0"), "{cdf}");

    let script = tmp.path().join("deploy.sh");
    let o = necc(&["deploy", "--candidate", s(&run), "--out", s(&script)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&script).unwrap();
    assert!(text.starts_with("#!/bin/sh"));
    assert!(text.contains("bpftool struct_ops register"));

    let zero = run.join("candidates").join("cand-0000.json");
    if zero.exists() {
        let o = necc(&["deploy", "--candidate", s(&zero), "--out", s(&tmp.path().join("no.sh"))]);
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("refusing to deploy"), "{}", stderr(&o));
        assert!(!tmp.path().join("no.sh").exists());
    }
}

#[test]
fn persistent_faults_exhaust() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = write_reqs(tmp.path(), "HD streaming", "30");
    let runs = tmp.path().join("runs");
    let o = necc(&[
        "--pool-size",
        "2",
        "--max-iterations",
        "2",
        "generate",
        "--requirements",
        s(&reqs),
        "--base",
        "cubic",
        "--out-dir",
        s(&runs),
        "--fault-all",
        "COMPILE_FAULT",
        "--persistent-faults",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(run_dir(&runs).join("manifest.json")).unwrap();
    assert!(manifest.contains("\"EXHAUSTED\""), "{manifest}");
}

#[test]
fn reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = write_reqs(tmp.path(), "HD streaming", "40");
    let mut trees = Vec::new();
    for i in 0..2 {
        let runs = tmp.path().join(format!("runs{i}"));
        let o = necc(&[
            "--seed",
            "5",
            "--pool-size",
            "2",
            "generate",
            "--requirements",
            s(&reqs),
            "--base",
            "illinois",
            "--out-dir",
            s(&runs),
            "--fault-all",
            "R2_FAULT",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let dir = run_dir(&runs);
        assert!(dir.file_name().unwrap().to_str().unwrap().ends_with("-seed5"));
        trees.push(tree(&dir));
    }
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn evaluate_scores_a_candidate() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = write_reqs(tmp.path(), "HD streaming", "60");
    let runs = tmp.path().join("runs");
    let o = necc(&["--pool-size", "1", "generate", "--requirements", s(&reqs), "--base", "cubic", "--out-dir", s(&runs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let source = run_dir(&runs).join("candidates").join("cand-0000.bpf.c");
    assert!(source.exists());
    let o = necc(&["evaluate", "--requirements", s(&reqs), "--candidate", s(&source)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("score: 100"), "{}", stdout(&o));

    let broken = tmp.path().join("broken.bpf.c");
    std::fs::write(&broken, "int main(void) { return 0; }\n").unwrap();
    let o = necc(&["evaluate", "--requirements", s(&reqs), "--candidate", s(&broken)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("score: 0"), "{}", stdout(&o));
}

#[test]
fn llm_replay_generates_and_persists_exchanges() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = tmp.path().join("r.toml");
    std::fs::write(
        &reqs,
        "[requirements]\nr1_min_throughput_mbps = 16.0\nr2_max_throughput_mbps = 30.0\nr3_loss_threshold = 0.05\n\n\
         [network]\nupload_speed_mbps = 60.0\nshare_fraction = 0.5\n",
    )
    .unwrap();
    let runs = tmp.path().join("runs");
    let fixture = core_fixture("cubic_pool3.json");
    let o = necc(&[
        "--backend",
        "llm",
        "--pool-size",
        "3",
        "generate",
        "--requirements",
        s(&reqs),
        "--base",
        "cubic",
        "--out-dir",
        s(&runs),
        "--llm-replay",
        s(&fixture),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = run_dir(&runs);
    for i in 0..3 {
        assert!(run.join("exchanges").join(format!("cand-000{i}.json")).exists());
    }
    let history = necc(&["report", "--run", s(&run), "--table", "history"]);
    assert!(stdout(&history).contains("100"), "{}", stdout(&history));
}

#[test]
fn llm_replay_exhausted_is_backend_unavailable() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = tmp.path().join("r.toml");
    std::fs::write(
        &reqs,
        "[requirements]\nr1_min_throughput_mbps = 16.0\nr2_max_throughput_mbps = 30.0\nr3_loss_threshold = 0.05\n\n\
         [network]\nupload_speed_mbps = 60.0\nshare_fraction = 0.5\n",
    )
    .unwrap();
    let runs = tmp.path().join("runs");
    let o = necc(&[
        "--backend",
        "llm",
        "--pool-size",
        "3",
        "generate",
        "--requirements",
        s(&reqs),
        "--base",
        "cubic",
        "--out-dir",
        s(&runs),
        "--llm-replay",
        s(&core_fixture("cubic_initial.json")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(run_dir(&runs).join("manifest.json")).unwrap();
    assert!(manifest.contains("\"error\": \""), "{manifest}");
}

#[test]
fn missing_api_key_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let reqs = write_reqs(tmp.path(), "HD streaming", "60");
    let o = necc(&[
        "--backend",
        "llm",
        "generate",
        "--requirements",
        s(&reqs),
        "--base",
        "cubic",
        "--out-dir",
        s(&tmp.path().join("runs")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("NECC_API_KEY"), "{}", stderr(&o));
}
