mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::fixtures;
use rpg::denoisers::oracle_caption;
use rpg::diffusion::{LatentGrid, Mask};
use rpg::layout::{Canvas, RegionRect};
use rpg::pipeline::{load_world, RunRecord};

fn demo(name: &str) -> PathBuf {
    fixtures().join("demo").join(name)
}

fn rpg(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpg")).args(args).args(extra).output().unwrap()
}

fn run_demo(command: &str, out: &Path, more: &[&str]) -> Output {
    let conf = demo("demo.conf");
    let mut args = vec![command, "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(more);
    rpg(&args, &[])
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_latent(path: &Path) -> LatentGrid {
    LatentGrid::from_rpgl_bytes(&std::fs::read(path).unwrap()).unwrap()
}

fn halves() -> Vec<RegionRect> {
    vec![RegionRect::new(0, 0, 8, 8, 0), RegionRect::new(8, 0, 8, 8, 1)]
}

fn labels(latent: &Path) -> Vec<String> {
    let world = load_world(&demo("world.gmm")).unwrap();
    oracle_caption(&read_latent(latent), &halves(), &world).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&rpg(&[], &[])), 2);
    assert_eq!(code(&rpg(&["plan", "--bogus"], &[])), 2);
    assert_eq!(code(&rpg(&["generate", "--backend", "carrier-pigeon"], &[])), 2);
    let dir = tempfile::tempdir().unwrap();
    let o = run_demo("generate", dir.path(), &["--canvas", "0x4"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run_demo("edit", dir.path(), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--latent"));
}

#[test]
fn fixture_miss_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_demo("plan", dir.path(), &["--prompt", "a prompt nobody recorded"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("no recorded response"));
}

#[test]
fn malformed_plan_file_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.rpg");
    std::fs::write(&bad, "```rpg-plan\nsplit: 1,,1\nassignment: 0\n```\n").unwrap();
    let o = run_demo("generate", &dir.path().join("out"), &["--plan", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn plan_writes_the_planned_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_demo("plan", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("0,0,8,8") && stdout.contains("8,0,8,8"), "{stdout}");
    let plan = std::fs::read_to_string(dir.path().join("plan.rpg")).unwrap();
    assert!(plan.contains("split: 1,1") && plan.contains("0|warm|a warm red glow"));
    assert_eq!(std::fs::read_to_string(dir.path().join("plan.log")).unwrap().matches("=== call").count(), 2);
}

#[test]
fn generate_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b", "c"] {
        let seed = if name == "c" { "8" } else { "7" };
        let o = run_demo("generate", &dir.path().join(name), &["--seed", seed]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let bytes = |n: &str| std::fs::read(dir.path().join(n).join("latent.rpgl")).unwrap();
    assert_eq!(bytes("a"), bytes("b"));
    assert_ne!(bytes("a"), bytes("c"));
    assert_eq!(labels(&dir.path().join("a").join("latent.rpgl")), ["a warm red glow", "a cool blue haze"]);
    let png = std::fs::read(dir.path().join("a").join("latent.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
    let record = RunRecord::parse(&std::fs::read_to_string(dir.path().join("a").join("record.txt")).unwrap()).unwrap();
    assert_eq!(record.get("command"), Some("generate"));
    assert_eq!(
        record.get("latent_digest").map(str::to_string),
        Some(read_latent(&dir.path().join("a").join("latent.rpgl")).digest())
    );
}

#[test]
fn generate_from_a_plan_file_needs_no_backend() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("attn.conf");
    std::fs::write(&conf, "denoiser = attn\nattn.dim = 8\nchannels = 4\ncanvas = 16x8\nsteps = 20\n").unwrap();
    let out = dir.path().join("out");
    let o = rpg(
        &["generate", "--backend", "http", "--config"],
        &[&conf, Path::new("--out"), &out, Path::new("--plan"), &demo("three_bands.rpg")],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_latent(&out.join("latent.rpgl")).shape(), rpg::diffusion::LatentShape::new(8, 16, 4));
}

#[test]
fn empty_edit_plan_returns_the_source_bytes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_demo("generate", &dir.path().join("gen"), &[])), 0);
    let source = dir.path().join("gen").join("latent.rpgl");
    let o = run_demo(
        "edit",
        &dir.path().join("edit"),
        &["--latent", source.to_str().unwrap(), "--plan", demo("empty.edit").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(dir.path().join("edit").join("edited.rpgl")).unwrap(), std::fs::read(&source).unwrap());
}

#[test]
fn edit_repaints_only_the_masked_half() {
    let dir = tempfile::tempdir().unwrap();
    let cool = demo("cool_cool.rpg");
    let o = run_demo("generate", &dir.path().join("gen"), &["--plan", cool.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let source = dir.path().join("gen").join("latent.rpgl");
    assert_eq!(labels(&source), ["a cool blue haze", "a cool blue haze"]);

    let o = run_demo(
        "edit",
        &dir.path().join("edit"),
        &["--latent", source.to_str().unwrap(), "--plan", demo("warm_left.edit").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let edited = dir.path().join("edit").join("edited.rpgl");
    assert_eq!(labels(&edited), ["a warm red glow", "a cool blue haze"]);
    let (before, after) = (read_latent(&source), read_latent(&edited));
    assert_eq!(before.crop(&halves()[1]).unwrap(), after.crop(&halves()[1]).unwrap());
}

#[test]
fn edit_accepts_mask_files_next_to_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_demo("generate", &dir.path().join("gen"), &[])), 0);
    let source = dir.path().join("gen").join("latent.rpgl");
    let canvas = Canvas::new(16, 8).unwrap();
    let mask = Mask::from_rect(&RegionRect::new(8, 0, 8, 8, 0), canvas).unwrap();
    std::fs::write(dir.path().join("right.rpgl"), mask.to_latent().to_rpgl_bytes()).unwrap();
    let edits = dir.path().join("erase.edit");
    std::fs::write(&edits, "del | a cool blue haze | @right.rpgl | background\n").unwrap();
    let o = run_demo(
        "edit",
        &dir.path().join("edit"),
        &["--latent", source.to_str().unwrap(), "--plan", edits.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(labels(&dir.path().join("edit").join("edited.rpgl")), ["a warm red glow", "background"]);

    std::fs::write(&edits, "del | x | @missing.rpgl | background\n").unwrap();
    let o = run_demo(
        "edit",
        &dir.path().join("edit2"),
        &["--latent", source.to_str().unwrap(), "--plan", edits.to_str().unwrap()],
    );
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("missing.rpgl"));
}

#[test]
fn loop_fixes_the_left_half_in_two_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_demo("loop", dir.path(), &["--plan", demo("cool_cool.rpg").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rounds = std::fs::read_to_string(dir.path().join("rounds.txt")).unwrap();
    assert!(rounds.starts_with("round 1 | discrepancies 1 | ops 1"), "{rounds}");
    assert!(rounds.contains("round 2 | discrepancies 0 | ops 0"), "{rounds}");
    assert!(rounds.trim_end().ends_with("status converged"));
    assert!(stderr(&o).is_empty(), "{}", stderr(&o));
    assert_eq!(labels(&dir.path().join("final.rpgl")), ["a warm red glow", "a cool blue haze"]);
    assert_eq!(labels(&dir.path().join("initial.rpgl")), ["a cool blue haze", "a cool blue haze"]);
    let log = std::fs::read_to_string(dir.path().join("loop.log")).unwrap();
    assert_eq!(log.matches("=== call").count(), 3);
}

#[test]
fn loop_warns_when_the_budget_runs_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_demo(
        "loop",
        dir.path(),
        &[
            "--plan",
            demo("cool_cool.rpg").to_str().unwrap(),
            "--prompt",
            "a unicorn on the left, cool on the right",
            "--max-rounds",
            "1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("warning: stopped after 1 rounds"), "{}", stderr(&o));
    let rounds = std::fs::read_to_string(dir.path().join("rounds.txt")).unwrap();
    assert!(rounds.contains("remaining missing-entity|a unicorn||0,0,8,8"), "{rounds}");
    let record = RunRecord::parse(&std::fs::read_to_string(dir.path().join("record.txt")).unwrap()).unwrap();
    assert_eq!(record.get("status"), Some("max-rounds-exceeded"));
}

#[test]
fn loop_with_rule_planner_and_oracle_captioner_is_offline() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("offline.conf");
    std::fs::write(
        &conf,
        format!(
            "world = {}\ncanvas = 16x8\nchannels = 3\nsteps = 40\nloop.captioner = oracle\nloop.planner = rules\nplan = {}\n",
            demo("world.gmm").display(),
            demo("cool_cool.rpg").display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = rpg(&["loop", "--backend", "http", "--config"], &[&conf, Path::new("--out"), &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // The plan's own recaptions are the targets, so the cool start is
    // already what it asks for.
    let rounds = std::fs::read_to_string(out.join("rounds.txt")).unwrap();
    assert!(rounds.contains("round 1 | discrepancies 0 | ops 0"), "{rounds}");
    assert!(!out.join("loop.log").exists());
}

#[test]
fn record_replay_matches() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_demo("loop", &dir.path().join("run"), &["--plan", demo("cool_cool.rpg").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let record = dir.path().join("run").join("record.txt");
    assert!(rpg::pipeline::replay_record(&record, &dir.path().join("again")).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("run").join("final.rpgl")).unwrap(),
        std::fs::read(dir.path().join("again").join("final.rpgl")).unwrap()
    );
}
