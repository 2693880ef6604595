use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn advtest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advtest")).args(args).env_remove("ADVTEST_OUTPUT_ROOT").output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let out = dir.join("run");
    let body = format!(
        "output_dir = {:?}\nn_npcs = 2\n[train]\ntotal_steps = 2048\ncheckpoint_every = 1\ntrace_every = 1\n[eval]\nepisodes = 3\nseeds = [0, 1]\n{extra}",
        out.to_str().unwrap()
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn unknown_key_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "[har]\nphi = 10.0\nbogus = 1\n");
    let o = advtest(&["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("har.bogus"), "{}", text(&o));

    let cfg = write_config(d.path(), "[har]\nphi = \"ten\"\n");
    let o = advtest(&["eval", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("har.phi"), "{}", text(&o));
}

#[test]
fn train_eval_replay_render_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "");
    let cfg = cfg.to_str().unwrap();

    let o = advtest(&["eval", cfg]);
    assert_eq!(o.status.code(), Some(3), "missing checkpoint: {}", text(&o));

    let o = advtest(&["train", cfg]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("2 / 2 iterations"), "{}", text(&o));

    let o = advtest(&["eval", cfg]);
    assert!(o.status.success(), "{}", text(&o));
    let out = text(&o);
    assert!(out.contains("trained vs vi:") && out.contains('%'), "{out}");

    for baseline in ["random", "npc"] {
        let o = advtest(&["eval", cfg, "--baseline", baseline]);
        assert!(o.status.success(), "{}", text(&o));
        assert!(text(&o).contains(&format!("{baseline} vs vi")));
    }
    let o = advtest(&["eval", cfg, "--baseline", "random", "--defender", "rvi"]);
    assert!(o.status.success() && text(&o).contains("random vs rvi"), "{}", text(&o));
    let o = advtest(&["eval", cfg, "--baseline", "random", "--defender", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let trace = d.path().join("run/traces/iter_000000.json");
    let o = advtest(&["replay", trace.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("no divergence"));

    let frames = d.path().join("frames");
    let o = advtest(&["render", trace.to_str().unwrap(), "--out", frames.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(frames.join("frame_0001.svg").exists());

    let mut t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    let x = t["steps"][1]["vehicles"][0]["x"].as_f64().unwrap();
    t["steps"][1]["vehicles"][0]["x"] = (x + 0.01).into();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, t.to_string()).unwrap();
    let o = advtest(&["replay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", text(&o));
    assert!(text(&o).contains("step 2"), "{}", text(&o));
}

#[test]
fn defender_train_for_planners_is_a_no_op() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "[defender]\ntype = \"rvi\"\n");
    let o = advtest(&["defender-train", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("needs no training"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            advtest_core::harness::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
