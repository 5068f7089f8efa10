//! Procedural stand-ins for raw camera images: smooth illumination, a few
//! hard-edged shapes, fine texture and sensor-like noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::jpeg::Raster;
use crate::seeds::rng_for;

pub fn generate_source(width: usize, height: usize, seed: u64) -> Raster {
    let mut rng = rng_for(seed, 0x5EED);
    let base: [f64; 3] = [rng.gen_range(60.0..190.0), rng.gen_range(60.0..190.0), rng.gen_range(60.0..190.0)];
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.005..0.08),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(8.0..40.0),
            )
        })
        .collect();
    let shapes: Vec<(f64, f64, f64, [f64; 3], bool)> = (0..rng.gen_range(3..8))
        .map(|_| {
            (
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
                rng.gen_range(4.0..(width.min(height) as f64 / 3.0).max(5.0)),
                [rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)],
                rng.gen_bool(0.5),
            )
        })
        .collect();
    let texture_freq = rng.gen_range(0.3..1.2);
    let texture_amp = rng.gen_range(2.0..10.0);
    let noise = Normal::new(0.0, rng.gen_range(1.5..5.0)).expect("valid sigma");

    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let mut lum = 0.0;
            for &(freq, phase_x, phase_y, amp) in &waves {
                lum += amp * (freq * fx + phase_x).sin() * (freq * 0.7 * fy + phase_y).cos();
            }
            lum += texture_amp * (texture_freq * fx).sin() * (texture_freq * 1.3 * fy).sin();
            let mut offset = [0.0; 3];
            for &(cx, cy, r, color, square) in &shapes {
                let inside = if square {
                    (fx - cx).abs() < r && (fy - cy).abs() < r
                } else {
                    (fx - cx).powi(2) + (fy - cy).powi(2) < r * r
                };
                if inside {
                    for c in 0..3 {
                        offset[c] += color[c];
                    }
                }
            }
            let grain = noise.sample(&mut rng);
            for c in 0..3 {
                let v = base[c] + lum + offset[c] + grain + noise.sample(&mut rng) * 0.5;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster {
        width,
        height,
        channels: 3,
        data,
    }
}
