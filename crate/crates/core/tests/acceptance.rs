//! End-to-end acceptance run on the five-image synthetic set.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texweave::edit::{estimate_noise_sigma, BrushMode};
use texweave::gradcheck::check_gradients;
use texweave::optim::{decompose, l1_target_loss, DecomposeOptions, Decomposition, Objective};
use texweave::pipeline::{
    ablation_config, apply_pipeline, EnabledFilters, MaskKind, ParameterMaskSet, Pipeline,
    PipelineConfig,
};
use texweave::project::codec::{decode_masks, encode_masks};
use texweave::project::{EditOp, Project, SegmentationParams};
use texweave::slic::slic_segment;
use texweave::synth::painting_set;
use texweave::tensor::ImageTensor;

const SIZE: usize = 256;
const ABLATIONS: [&str; 4] = ["bilateral", "xdog", "bump", "contrast"];

struct Run {
    l1: f64,
    noise: f64,
    elapsed: Duration,
}

struct ImageRuns {
    full: Run,
    no_tv: Run,
    fine: Run,
    ablated: Vec<Run>,
    gauss_l1: f64,
    lr_trace: Vec<f64>,
    masks: ParameterMaskSet,
}

fn run(ia: &ImageTensor<f32>, target: &ImageTensor<f32>, cfg: &PipelineConfig, tv: f64, label: &str) -> (Run, Decomposition) {
    let opts = DecomposeOptions {
        lambda_tv: tv,
        ..Default::default()
    };
    let start = Instant::now();
    let d = decompose(ia, target, cfg, &opts, |_| {}).expect("decompose");
    let elapsed = start.elapsed();
    let r = Run {
        l1: d.final_l1,
        noise: estimate_noise_sigma(&d.masks),
        elapsed,
    };
    eprintln!("  {label}: l1 {:.5} noise {:.6} in {:.1}s", r.l1, r.noise, elapsed.as_secs_f64());
    (r, d)
}

fn image_runs(i: usize, img: &ImageTensor<f32>) -> ImageRuns {
    eprintln!("image {i}");
    let ia = slic_segment(img, 1000, 10.0, 10).unwrap().render();
    let ia_fine = slic_segment(img, 5000, 10.0, 10).unwrap().render();
    let default = PipelineConfig::default();
    let (full, d) = run(&ia, img, &default, 0.2, "full");
    let (no_tv, _) = run(&ia, img, &default, 0.0, "no tv");
    let (fine, _) = run(&ia_fine, img, &default, 0.2, "s=5000");
    let ablated = ABLATIONS
        .iter()
        .map(|name| run(&ia, img, &ablation_config(name).unwrap(), 0.2, &format!("no {name}")).0)
        .collect();
    let mut gauss = PipelineConfig::default();
    gauss.enabled = EnabledFilters::none();
    gauss.enabled.pre_smooth = true;
    let blurred = apply_pipeline(&ia, &ParameterMaskSet::new(SIZE, SIZE), &gauss).unwrap();
    ImageRuns {
        full,
        no_tv,
        fine,
        ablated,
        gauss_l1: l1_target_loss(&blurred, img).unwrap(),
        lr_trace: d.trace.iter().map(|r| r.lr).collect(),
        masks: d.masks,
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn gradient_check() -> (bool, String) {
    let n = 16;
    let set = painting_set(n);
    let obj = Objective::new(&PipelineConfig::default(), set[0].cast::<f64>(), set[1].cast::<f64>(), 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut masks = ParameterMaskSet::<f64>::new(n, n);
    for kind in MaskKind::ALL {
        for z in masks.latents_mut(kind) {
            *z = rng.random_range(-2.0..2.0);
        }
    }
    let grad = obj.evaluate(&masks).unwrap().grad;
    let mut worst = 0.0f64;
    for kind in MaskKind::ALL {
        let probes: Vec<usize> = (0..20).map(|_| rng.random_range(0..n * n)).collect();
        let f = |v: &[f64]| {
            let mut m = masks.clone();
            m.latents_mut(kind).copy_from_slice(v);
            obj.loss(&m).unwrap()
        };
        worst = worst.max(check_gradients(f, masks.latents(kind), grad.get(kind), &probes, 1e-6));
    }
    (worst <= 1e-3, format!("worst relative error {worst:.2e} over 8 masks x 20 probes"))
}

fn hue(p: &[f64]) -> Option<f64> {
    let max = p[0].max(p[1]).max(p[2]);
    let c = max - p[0].min(p[1]).min(p[2]);
    if c < 1e-9 {
        return None;
    }
    let h = if max == p[0] {
        ((p[1] - p[2]) / c).rem_euclid(6.0)
    } else if max == p[1] {
        (p[2] - p[0]) / c + 2.0
    } else {
        (p[0] - p[1]) / c + 4.0
    };
    Some(h / 6.0)
}

fn hue_check() -> (bool, String) {
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = ImageTensor::<f64>::from_fn(n, n, 3, |_, _, _| rng.random_range(0.0..1.0));
    let mut masks = ParameterMaskSet::<f64>::new(n, n);
    for kind in MaskKind::ALL {
        for z in masks.latents_mut(kind) {
            *z = rng.random_range(-3.0..3.0);
        }
    }
    let trace = Pipeline::new(&PipelineConfig::default()).unwrap().trace(&img, &masks.ranged_planes()).unwrap();
    let (mut worst, mut checked) = (0.0f64, 0);
    for y in 0..n {
        for x in 0..n {
            let after = trace.unclamped().pixel(y, x);
            if after.iter().any(|v| !(0.0..=1.0).contains(v)) {
                continue;
            }
            if let (Some(a), Some(b)) = (hue(trace.after_bilateral().pixel(y, x)), hue(after)) {
                let d = (a - b).rem_euclid(1.0);
                worst = worst.max(d.min(1.0 - d));
                checked += 1;
            }
        }
    }
    (worst <= 1e-5 && checked > 0, format!("max hue shift {worst:.2e} turns over {checked} pixels"))
}

fn slic_check(set: &[ImageTensor<f32>]) -> (bool, String) {
    let one = slic_segment(&set[0], 1, 10.0, 10).unwrap().segment_count() == 1;
    let (h, w, split) = (64, 80, 29);
    let two = ImageTensor::from_fn(h, w, 3, |_, x, c| if x < split { [0.8, 0.3, 0.2][c] } else { [0.2, 0.4, 0.9][c] });
    let seg = slic_segment(&two, 60, 10.0, 10).unwrap();
    let l = seg.labels();
    let recall = (0..h).all(|y| l[y * w + split - 1] != l[y * w + split]);
    let mut counts = Vec::new();
    let mut in_band = true;
    for img in set {
        for s in [100usize, 1000] {
            let n = slic_segment(img, s, 10.0, 10).unwrap().segment_count();
            in_band &= n * 2 >= s && n * 2 <= 3 * s;
            counts.push(n);
        }
    }
    let det = slic_segment(&set[1], 1000, 10.0, 10).unwrap() == slic_segment(&set[1], 1000, 10.0, 10).unwrap();
    (
        one && recall && in_band && det,
        format!("s=1 single {one}, two-tone recall {}, counts {counts:?}, deterministic {det}", if recall { "1.0" } else { "<1" }),
    )
}

fn codec_check(masks: &ParameterMaskSet, img: &ImageTensor<f32>) -> (bool, String) {
    let bytes = encode_masks(masks);
    let container = encode_masks(&decode_masks(&bytes).unwrap()) == bytes;

    let small = ImageTensor::from_fn(64, 64, 3, |y, x, c| img.get(y * 2, x * 2, c));
    let mut p = Project::new(small).unwrap();
    let opts = DecomposeOptions {
        iterations: 20,
        ..Default::default()
    };
    let seg = SegmentationParams {
        segments: 200,
        ..Default::default()
    };
    p.decompose(seg, PipelineConfig::default(), &opts, |_| {}).unwrap();
    let pristine = p.render_png().unwrap();
    p.apply_edit(EditOp::Global {
        mask: MaskKind::BumpScale,
        factor: 1.5,
        offset: 0.0,
    })
    .unwrap();
    let last = p
        .apply_edit(EditOp::Brush {
            mask: MaskKind::ContourOpacity,
            center: (30.0, 20.0),
            radius: 8.0,
            hardness: 0.5,
            value: 1.0,
            mode: BrushMode::Set,
        })
        .unwrap();
    let edited = p.render_png().unwrap();
    let dir = tempfile::tempdir().unwrap();
    p.save(dir.path()).unwrap();
    let saved = std::fs::read(dir.path().join("masks.txwv")).unwrap();
    let mut q = Project::load(dir.path()).unwrap();
    let replay = q.render_png().unwrap() == edited;
    let dir2 = tempfile::tempdir().unwrap();
    q.save(dir2.path()).unwrap();
    let resaved = std::fs::read(dir2.path().join("masks.txwv")).unwrap() == saved;
    q.undo(last).unwrap();
    q.undo(last - 1).unwrap();
    let undo = q.render_png().unwrap() == pristine;
    (
        container && replay && resaved && undo,
        format!("container bit-identical {container}, resave identical {resaved}, replayed render identical {replay}, undo restores {undo}"),
    )
}

fn main() {
    let started = Instant::now();
    let set = painting_set(SIZE);
    let runs: Vec<ImageRuns> = set.iter().enumerate().map(|(i, img)| image_runs(i, img)).collect();
    let mut results: Vec<(&str, bool, String)> = Vec::new();

    let with_tv = mean(runs.iter().map(|r| r.full.noise));
    let without = mean(runs.iter().map(|r| r.no_tv.noise));
    results.push((
        "1 tv noise reduction",
        with_tv <= 0.1 * without,
        format!("mean sigma {with_tv:.6} with tv vs {without:.6} without (ratio {:.1}x)", without / with_tv),
    ));

    let l1 = mean(runs.iter().map(|r| r.full.l1));
    let fine = mean(runs.iter().map(|r| r.fine.l1));
    let gauss = mean(runs.iter().map(|r| r.gauss_l1));
    results.push((
        "2 reconstruction quality",
        l1 <= 0.06 && fine <= l1 && l1 < gauss,
        format!("mean l1 {l1:.5} at s=1000, {fine:.5} at s=5000, gaussian baseline {gauss:.5}"),
    ));

    let ablated: Vec<f64> = (0..ABLATIONS.len()).map(|k| mean(runs.iter().map(|r| r.ablated[k].l1))).collect();
    let detail: Vec<String> = ABLATIONS.iter().zip(&ablated).map(|(n, v)| format!("no {n} {v:.5}")).collect();
    results.push((
        "3 ablation ordering",
        ablated.iter().all(|&a| a > l1),
        format!("full {l1:.5}; {}", detail.join(", ")),
    ));

    let (ok, msg) = gradient_check();
    results.push(("4 gradient correctness", ok, msg));
    let (ok, msg) = hue_check();
    results.push(("5 hue invariance", ok, msg));
    let (ok, msg) = slic_check(&set);
    results.push(("6 slic properties", ok, msg));

    let lr = &runs[0].lr_trace;
    let flat = lr[..50].iter().all(|&v| v == 0.01);
    let at60 = lr[60];
    results.push((
        "7 optimization schedule",
        flat && (at60 - 0.00941192).abs() <= 1e-15,
        format!("lr 0.01 through 49: {flat}; lr(60) = {at60}"),
    ));

    let (ok, msg) = codec_check(&runs[0].masks, &set[0]);
    results.push(("8 codec round trip", ok, msg));

    let slowest = runs.iter().map(|r| r.full.elapsed).max().unwrap();
    results.push((
        "9 runtime",
        slowest <= Duration::from_secs(120),
        format!(
            "slowest 256x256 100-iteration decompose {:.1}s on {} worker thread(s)",
            slowest.as_secs_f64(),
            texweave::par::current_threads()
        ),
    ));

    println!();
    for (name, ok, msg) in &results {
        println!("{} {name}: {msg}", if *ok { "PASS" } else { "FAIL" });
    }
    println!("total time {:.0}s", started.elapsed().as_secs_f64());
    if results.iter().any(|r| !r.1) {
        std::process::exit(1);
    }
}
