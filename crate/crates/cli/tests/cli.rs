use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texweave::pipeline::MaskKind;
use texweave::project::imageio::{encode_png, encode_png_gray};
use texweave::project::Project;
use texweave::synth::painting;
use texweave::tensor::ImageTensor;

const N: usize = 48;

fn texweave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texweave"))
        .args(args)
        .env("TEXWEAVE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = texweave(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("in.png"), encode_png(&painting(N, N, 9)).unwrap()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn decompose(&self, out: &str, extra: &[&str]) -> Output {
        let input = self.path("in.png");
        let proj = self.path(out);
        let mut args = vec![
            "decompose",
            "--input",
            s(&input),
            "--segments",
            "120",
            "--iters",
            "12",
            "--out",
            s(&proj),
        ];
        args.extend_from_slice(extra);
        ok(&args)
    }
}

#[test]
fn decompose_writes_project_and_trace() {
    let f = Fixture::new();
    let out = f.decompose("p", &[]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("iteration 10/12"), "{stderr}");
    let csv = std::fs::read_to_string(f.path("p/loss.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "iteration,lr,l1,tv,total");
    assert_eq!(rows.len(), 13);
    let total = |row: &str| row.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    assert!(total(rows[12]) < total(rows[1]));
    for name in ["manifest.json", "input.png", "abstraction.png", "labels.bin", "masks.txwv"] {
        assert!(f.path("p").join(name).is_file(), "{name}");
    }
}

#[test]
fn render_is_deterministic_and_previews_every_mask() {
    let f = Fixture::new();
    f.decompose("p", &[]);
    let (proj, a, b, prev) = (f.path("p"), f.path("a.png"), f.path("b.png"), f.path("prev"));
    ok(&["render", "--project", s(&proj), "--out", s(&a), "--mask-previews", s(&prev)]);
    ok(&["render", "--project", s(&proj), "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let mut names: Vec<String> = std::fs::read_dir(&prev)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut expected: Vec<String> = MaskKind::ALL.iter().map(|k| format!("{k}.png")).collect();
    expected.sort();
    assert_eq!(names, expected);
    let api = Project::load(&proj).unwrap().render_png().unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), api);
}

#[test]
fn metrics_match_the_library() {
    let f = Fixture::new();
    f.decompose("p", &[]);
    let proj = f.path("p");
    let out = ok(&["metrics", "--project", s(&proj)]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = Project::load(&proj).unwrap().metrics(None).unwrap();
    assert_eq!(json["l1"].as_f64().unwrap(), m.l1);
    assert_eq!(json["tv"].as_f64().unwrap(), m.tv);
    assert_eq!(json["noise_sigma"].as_f64().unwrap(), m.noise_sigma);

    let render = f.path("r.png");
    ok(&["render", "--project", s(&proj), "--out", s(&render)]);
    let out = ok(&["metrics", "--project", s(&proj), "--against", s(&render)]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["l1"].as_f64().unwrap(), 0.0);
}

#[test]
fn disabled_filter_keeps_initial_masks() {
    let f = Fixture::new();
    f.decompose("p", &["--disable", "bump"]);
    let p = Project::load(&f.path("p")).unwrap();
    let masks = p.masks().unwrap();
    for kind in [MaskKind::BumpScale, MaskKind::PhongSpecular, MaskKind::BumpOpacity] {
        assert!(masks.latents(kind).iter().all(|&z| z == 0.0));
    }
    assert!(!p.manifest().pipeline.enabled.bump);
}

#[test]
fn edits_append_to_the_log_and_replay() {
    let f = Fixture::new();
    f.decompose("p", &[]);
    f.decompose("q", &["--tv", "0"]);
    let (proj, other) = (f.path("p"), f.path("q"));
    let ramp = ImageTensor::from_fn(N, N, 1, |y, _, _| y as f32 / (N - 1) as f32);
    std::fs::write(f.path("depth.png"), encode_png_gray(&ramp).unwrap()).unwrap();
    std::fs::write(f.path("content.png"), encode_png(&painting(N, N, 3)).unwrap()).unwrap();
    let depth = f.path("depth.png");
    let content = f.path("content.png");
    let p = s(&proj);
    let edits: Vec<Vec<&str>> = vec![
        vec!["global", "--mask", "bump_scale", "--factor", "1.5"],
        vec!["brush", "--mask", "contour_opacity", "--x", "20", "--y", "14", "--radius", "5", "--value", "1"],
        vec!["blend", "--b", s(&other), "--mask-file", s(&depth)],
        vec!["match", "--source", "0,1", "--reference", "4,5"],
        vec!["lod", "--rect", "0,0,16,16", "--segments", "2"],
        vec!["copy", "--labels", "3", "--dx", "4", "--dy", "-2"],
        vec!["color", "--labels", "2", "--color", "0.9,0.2,0.1", "--t", "0.5"],
        vec!["content", "--rect", "30,30,10,10", "--image", s(&content), "--t", "1"],
    ];
    for (i, e) in edits.iter().enumerate() {
        let mut args = vec!["edit", "--project", p];
        args.extend_from_slice(e);
        let out = ok(&args);
        let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(json["edit_id"].as_u64().unwrap(), i as u64 + 1);
    }
    let loaded = Project::load(&proj).unwrap();
    assert_eq!(loaded.edits().len(), edits.len());
    let first = f.path("first.png");
    ok(&["render", "--project", p, "--out", s(&first)]);
    assert_eq!(std::fs::read(&first).unwrap(), loaded.render_png().unwrap());

    ok(&["edit", "--project", p, "undo", "--id", "1"]);
    let base = f.path("base.png");
    ok(&["render", "--project", p, "--out", s(&base)]);
    let fresh = Project::load(&proj).unwrap();
    assert!(fresh.edits().is_empty());
    assert_ne!(std::fs::read(&base).unwrap(), std::fs::read(&first).unwrap());
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let missing = f.path("missing.png");
    let out = f.path("out");
    let code = |args: &[&str]| texweave(args).status.code().unwrap();
    assert_eq!(code(&["decompose", "--input", s(&missing), "--out", s(&out)]), 2);
    std::fs::write(f.path("text.png"), "hello").unwrap();
    let text = f.path("text.png");
    assert_eq!(code(&["decompose", "--input", s(&text), "--out", s(&out)]), 2);
    let input = f.path("in.png");
    assert_eq!(code(&["decompose", "--input", s(&input), "--out", s(&out), "--bogus"]), 64);
    assert_eq!(code(&["decompose", "--input", s(&input), "--out", s(&out), "--iters", "x"]), 64);
    assert_eq!(code(&["decompose", "--input", s(&input), "--out", s(&out), "--iters", "0"]), 64);
    assert_eq!(code(&["decompose", "--input", s(&input), "--out", s(&out), "--disable", "blur"]), 64);
    assert_eq!(code(&["render", "--project", s(&missing), "--out", s(&out)]), 2);
    assert_eq!(code(&["frobnicate"]), 64);
    assert_eq!(code(&["--help"]), 0);

    f.decompose("p", &[]);
    let p = f.path("p");
    std::fs::write(p.join("masks.txwv"), b"TXWV").unwrap();
    assert_eq!(code(&["render", "--project", s(&p), "--out", s(&out)]), 2);
}

#[test]
fn bad_edits_leave_the_log_alone() {
    let f = Fixture::new();
    f.decompose("p", &[]);
    let p = f.path("p");
    let code = |args: &[&str]| texweave(args).status.code().unwrap();
    let base = ["edit", "--project", s(&p)];
    let with = |tail: &[&'static str]| [&base[..], tail].concat();
    assert_eq!(code(&with(&["brush", "--mask", "contrast", "--x", "-50", "--y", "-50", "--radius", "3", "--value", "1"])), 64);
    assert_eq!(code(&with(&["global", "--mask", "sharpness", "--factor", "2"])), 64);
    assert_eq!(code(&with(&["undo", "--id", "7"])), 64);
    assert!(Project::load(&p).unwrap().edits().is_empty());
}
