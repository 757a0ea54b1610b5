//! Seeded procedural "paintings" used by tests and benchmarks.
//!
//! Each image is a Voronoi partition into flat-ish color regions with soft
//! gradients, an oriented stroke texture per region, dark outlines along
//! region borders and a little pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::ImageTensor;

struct Region {
    x: f64,
    y: f64,
    color: [f64; 3],
    slope: [f64; 2],
    angle: f64,
    freq: f64,
    stroke: f64,
}

/// Generates a `height x width` RGB painting from `seed`.
pub fn painting(height: usize, width: usize, seed: u64) -> ImageTensor<f32> {
    painting_with_grain(height, width, seed, 0.02)
}

/// [`painting`] with uniform per-pixel grain of amplitude `grain`.
pub fn painting_with_grain(height: usize, width: usize, seed: u64, grain: f64) -> ImageTensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(18..36);
    let regions: Vec<Region> = (0..count)
        .map(|_| {
            let (lo, hi) = if rng.random_bool(0.3) {
                (0.03, 0.25)
            } else {
                (0.15, 0.95)
            };
            Region {
                x: rng.random_range(0.0..width as f64),
                y: rng.random_range(0.0..height as f64),
                color: [
                    rng.random_range(lo..hi),
                    rng.random_range(lo..hi),
                    rng.random_range(lo..hi),
                ],
                slope: [
                    rng.random_range(-0.002..0.002),
                    rng.random_range(-0.002..0.002),
                ],
                angle: rng.random_range(0.0..std::f64::consts::PI),
                freq: rng.random_range(0.35..0.9),
                stroke: rng.random_range(0.04..0.12),
            }
        })
        .collect();
    let outline = rng.random_range(1.2..2.2);
    let noise: Vec<f64> = (0..height * width)
        .map(|_| rng.random_range(-1.0..1.0) * grain)
        .collect();
    ImageTensor::from_fn(height, width, 3, |y, x, c| {
        let (fx, fy) = (x as f64, y as f64);
        let (mut d1, mut d2, mut best) = (f64::INFINITY, f64::INFINITY, 0);
        for (i, r) in regions.iter().enumerate() {
            let d = ((fx - r.x).powi(2) + (fy - r.y).powi(2)).sqrt();
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = i;
            } else if d < d2 {
                d2 = d;
            }
        }
        let r = &regions[best];
        let along = fx * r.angle.cos() + fy * r.angle.sin();
        let across = -fx * r.angle.sin() + fy * r.angle.cos();
        let wobble = (across * 0.21).sin() * 2.0;
        let strokes =
            r.stroke * ((along + wobble) * r.freq).sin() * (0.6 + 0.4 * (across * 0.13).cos());
        let shade = 1.0 + strokes + r.slope[0] * (fx - r.x) + r.slope[1] * (fy - r.y);
        let edge = ((d2 - d1) / outline).min(1.0);
        let dark = 0.15 + 0.85 * edge * edge;
        (r.color[c] * shade * dark + noise[y * width + x]).clamp(0.0, 1.0) as f32
    })
}

/// The fixed five-image set used by the acceptance run and benchmarks.
pub fn painting_set(size: usize) -> Vec<ImageTensor<f32>> {
    (0..5).map(|i| painting(size, size, 0x5eed + i)).collect()
}
