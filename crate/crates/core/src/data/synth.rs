//! Procedural event scenes standing in for recorded datasets.
//!
//! A scene is a textured background at depth 1.0 plus a few textured
//! rectangles at nearer depths. The camera translates, so every object moves
//! with image velocity `speed / depth` (near objects move faster). Events are
//! emitted per pixel whenever the log intensity departs from the pixel's
//! reference level by at least the contrast threshold, in the style of a
//! DVS sensor, with one channel per polarity.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DepthMap, SampleTuple, SpikeTensor};
use crate::error::{cfg_err, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub samples: usize,
    pub timesteps: usize,
    pub height: usize,
    pub width: usize,
    /// Log-intensity change that triggers an event.
    pub contrast_threshold: f64,
    /// Image speed in pixels per frame of an object at depth 1.0.
    pub speed: f64,
    /// Channels of the synthetic teacher features.
    pub teacher_dim: usize,
    /// Half-width of the uniform noise added to teacher features.
    pub teacher_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            samples: 4,
            timesteps: 4,
            height: 64,
            width: 64,
            contrast_threshold: 0.15,
            speed: 1.5,
            teacher_dim: 16,
            teacher_noise: 0.05,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(8) || !self.width.is_multiple_of(8) {
            return Err(cfg_err!("height and width must be positive multiples of 8, got {}x{}", self.height, self.width));
        }
        if self.timesteps == 0 {
            return Err(cfg_err!("timesteps must be at least 1"));
        }
        if !(self.contrast_threshold > 0.0) {
            return Err(cfg_err!("contrast_threshold must be positive"));
        }
        if self.teacher_dim == 0 {
            return Err(cfg_err!("teacher_dim must be at least 1"));
        }
        Ok(())
    }
}

/// Sinusoidal grating `base + amp * sin(2 pi (fx u + fy v) + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub base: f64,
    pub amp: f64,
    pub fx: f64,
    pub fy: f64,
    pub phase: f64,
}

impl Texture {
    pub fn flat(level: f64) -> Self {
        Texture { base: level, amp: 0.0, fx: 0.0, fy: 0.0, phase: 0.0 }
    }

    fn intensity(&self, u: f64, v: f64) -> f64 {
        let i = self.base + self.amp * (2.0 * PI * (self.fx * u + self.fy * v) + self.phase).sin();
        i.max(0.05).min(1.0)
    }

    fn random(rng: &mut ChaCha8Rng) -> Self {
        let base = rng.gen_range(0.25..0.8);
        Texture {
            base,
            amp: rng.gen_range(0.3..0.6) * base,
            fx: rng.gen_range(-0.25..0.25),
            fy: rng.gen_range(-0.25..0.25),
            phase: rng.gen_range(0.0..2.0 * PI),
        }
    }
}

/// Axis-aligned textured rectangle; position is its top-left corner at frame 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// Normalized depth in (0, 1).
    pub depth: f64,
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub background: Texture,
    /// Image-plane velocity (px/frame) of something at depth 1.0.
    pub velocity: (f64, f64),
    pub rects: Vec<Rect>,
}

impl Scene {
    /// Nearest surface under pixel centre `(cx, cy)` at `frame`: `(depth, intensity)`.
    fn sample(&self, cx: f64, cy: f64, frame: f64) -> (f64, f64) {
        let mut best: Option<(f64, f64)> = None;
        for r in &self.rects {
            let ox = r.x + self.velocity.0 * frame / r.depth;
            let oy = r.y + self.velocity.1 * frame / r.depth;
            let (u, v) = (cx - ox, cy - oy);
            if u >= 0.0 && u < r.w && v >= 0.0 && v < r.h && best.is_none_or(|(d, _)| r.depth < d) {
                best = Some((r.depth, r.texture.intensity(u, v)));
            }
        }
        best.unwrap_or_else(|| {
            let (u, v) = (cx - self.velocity.0 * frame, cy - self.velocity.1 * frame);
            (1.0, self.background.intensity(u, v))
        })
    }
}

/// Render `timesteps` event frames and the depth map of the last frame.
pub fn render_scene(scene: &Scene, timesteps: usize, h: usize, w: usize, threshold: f64) -> Result<(SpikeTensor, DepthMap)> {
    let mut reference = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            reference[y * w + x] = scene.sample(x as f64 + 0.5, y as f64 + 0.5, 0.0).1.ln();
        }
    }
    let mut spikes = SpikeTensor::zeros(timesteps, 2, h, w);
    let mut depth = vec![0.0f32; h * w];
    for t in 0..timesteps {
        let frame = (t + 1) as f64;
        for y in 0..h {
            for x in 0..w {
                let (d, i) = scene.sample(x as f64 + 0.5, y as f64 + 0.5, frame);
                let level = i.ln();
                let delta = level - reference[y * w + x];
                if delta >= threshold {
                    spikes.set(t, 0, y, x, true);
                    reference[y * w + x] = level;
                } else if delta <= -threshold {
                    spikes.set(t, 1, y, x, true);
                    reference[y * w + x] = level;
                }
                if t + 1 == timesteps {
                    depth[y * w + x] = d as f32;
                }
            }
        }
    }
    Ok((spikes, DepthMap::new(h, w, depth)?))
}

fn random_scene(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Scene {
    let (hf, wf) = (cfg.height as f64, cfg.width as f64);
    let n = rng.gen_range(2..=5);
    let mut depths: Vec<f64> = Vec::with_capacity(n);
    while depths.len() < n {
        let d = rng.gen_range(0.35..0.9);
        if depths.iter().all(|&o| (o - d).abs() >= 0.08) {
            depths.push(d);
        }
    }
    let rects = depths
        .into_iter()
        .map(|depth| {
            let rw = rng.gen_range(0.3..0.55) * wf;
            let rh = rng.gen_range(0.3..0.55) * hf;
            Rect {
                x: rng.gen_range(-0.1 * rw..wf - 0.9 * rw),
                y: rng.gen_range(-0.1 * rh..hf - 0.9 * rh),
                w: rw,
                h: rh,
                depth,
                texture: Texture::random(rng),
            }
        })
        .collect();
    let angle = rng.gen_range(0.0..2.0 * PI);
    Scene {
        background: Texture::random(rng),
        velocity: (cfg.speed * angle.cos(), cfg.speed * angle.sin()),
        rects,
    }
}

/// Stand-in teacher features `[d, H/8, W/8]`: Fourier encoding of the
/// block-averaged depth, box-smoothed, plus seeded uniform noise.
pub fn teacher_features(depth: &DepthMap, dim: usize, noise: f64, rng: &mut impl Rng) -> Result<Tensor<f32>> {
    if dim == 0 {
        return Err(cfg_err!("teacher dimension must be positive"));
    }
    let (gh, gw) = (depth.h() / 8, depth.w() / 8);
    let mut coarse = vec![0.0f64; gh * gw];
    for gy in 0..gh {
        for gx in 0..gw {
            let (mut s, mut n) = (0.0, 0usize);
            for y in gy * 8..gy * 8 + 8 {
                for x in gx * 8..gx * 8 + 8 {
                    let i = y * depth.w() + x;
                    if depth.mask()[i] {
                        s += depth.values()[i] as f64;
                        n += 1;
                    }
                }
            }
            coarse[gy * gw + gx] = if n > 0 { s / n as f64 } else { 1.0 };
        }
    }
    let mut out = vec![0.0f32; dim * gh * gw];
    for k in 0..dim {
        let freq = (k / 2 + 1) as f64 * PI;
        let plane: Vec<f64> = coarse.iter().map(|&z| if k % 2 == 0 { (freq * z).sin() } else { (freq * z).cos() }).collect();
        for gy in 0..gh {
            for gx in 0..gw {
                let (mut s, mut n) = (0.0, 0.0);
                for yy in gy.saturating_sub(1)..(gy + 2).min(gh) {
                    for xx in gx.saturating_sub(1)..(gx + 2).min(gw) {
                        s += plane[yy * gw + xx];
                        n += 1.0;
                    }
                }
                let jitter = if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
                out[(k * gh + gy) * gw + gx] = (s / n + jitter) as f32;
            }
        }
    }
    Tensor::new(&[dim, gh, gw], out)
}

/// Deterministic synthetic dataset; sample `i` depends only on `(seed, i)`.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<SampleTuple>> {
    cfg.validate()?;
    (0..cfg.samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let scene = random_scene(&mut rng, cfg);
            let (spikes, depth) = render_scene(&scene, cfg.timesteps, cfg.height, cfg.width, cfg.contrast_threshold)?;
            let teacher = teacher_features(&depth, cfg.teacher_dim, cfg.teacher_noise, &mut rng)?;
            SampleTuple::new(spikes, depth, Some(teacher))
        })
        .collect()
}
