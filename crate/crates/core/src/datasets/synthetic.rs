use super::{Dataset, LabeledSample};
use crate::error::Result;
use crate::rng::stream;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameters of the synthetic shape dataset. Domains differ by hue family;
/// shape, pose, scale, and background tone are nuisance factors shared by all
/// domains.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SyntheticShapesSpec {
    pub num_domains: usize,
    pub samples_per_domain: usize,
    pub image_size: usize,
    /// Center offset as a fraction of the image size.
    pub position_jitter: f64,
    /// Object radius range as fractions of the image size.
    pub scale_range: (f64, f64),
    /// Background tone range in [-1, 1].
    pub background_range: (f64, f64),
    /// Hue jitter in radians around the domain's base hue.
    pub hue_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticShapesSpec {
    /// Desk-scale default: 3 domains, 220 samples each (600/60 after the
    /// 10/11 split), 32px.
    fn default() -> Self {
        SyntheticShapesSpec {
            num_domains: 3,
            samples_per_domain: 220,
            image_size: 32,
            position_jitter: 0.08,
            scale_range: (0.24, 0.36),
            background_range: (-0.25, 0.25),
            hue_jitter: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticShapesSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 2 {
            return Err(crate::Error::invalid_spec("num_domains must be >= 2"));
        }
        if self.samples_per_domain == 0 || self.image_size < 8 {
            return Err(crate::Error::invalid_spec(
                "need samples_per_domain >= 1 and image_size >= 8",
            ));
        }
        if self.scale_range.0 > self.scale_range.1 || self.scale_range.0 <= 0.0 {
            return Err(crate::Error::invalid_spec("bad scale range"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Circle,
    Square,
    Triangle,
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(2.0 * std::f64::consts::PI) / (std::f64::consts::PI / 3.0);
    let i = h.floor() as usize % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Signed distance to the shape boundary in pixels (negative inside).
fn signed_distance(shape: Shape, dx: f64, dy: f64, r: f64) -> f64 {
    match shape {
        Shape::Circle => (dx * dx + dy * dy).sqrt() - r,
        Shape::Square => dx.abs().max(dy.abs()) - r * 0.9,
        Shape::Triangle => {
            // equilateral, apex up, inscribed in radius r
            let k = 3.0f64.sqrt();
            let d1 = -dy - r * 0.5; // bottom edge (image y grows downward)
            let d2 = (k * dx + dy) / 2.0 - r * 0.5;
            let d3 = (-k * dx + dy) / 2.0 - r * 0.5;
            d1.max(d2).max(d3)
        }
    }
}

/// Deterministic synthetic dataset: each sample is one smooth-edged shape on
/// a plain background, colored by its domain's hue family.
pub fn generate_synthetic(spec: &SyntheticShapesSpec) -> Result<Dataset> {
    spec.validate()?;
    let c = spec.num_domains;
    let size = spec.image_size;
    let mut samples = Vec::with_capacity(c * spec.samples_per_domain);
    for domain in 0..c {
        let base_hue = 2.0 * std::f64::consts::PI * domain as f64 / c as f64;
        for k in 0..spec.samples_per_domain {
            let id = (domain * spec.samples_per_domain + k) as u64;
            let mut rng = stream(spec.seed, "synthetic", id);
            let shape = match rng.random_range(0..3) {
                0 => Shape::Circle,
                1 => Shape::Square,
                _ => Shape::Triangle,
            };
            let hue = base_hue + rng.random_range(-spec.hue_jitter..spec.hue_jitter);
            let rgb = hsv_to_rgb(hue, 0.9, 0.9);
            let bg = rng.random_range(spec.background_range.0..spec.background_range.1);
            let cx = size as f64 * (0.5 + rng.random_range(-spec.position_jitter..spec.position_jitter));
            let cy = size as f64 * (0.5 + rng.random_range(-spec.position_jitter..spec.position_jitter));
            let r = size as f64 * rng.random_range(spec.scale_range.0..spec.scale_range.1);

            let mut image = ArrayD::<f32>::zeros(IxDyn(&[3, size, size]));
            for y in 0..size {
                for x in 0..size {
                    let d = signed_distance(shape, x as f64 + 0.5 - cx, y as f64 + 0.5 - cy, r);
                    // ~1px anti-aliased edge
                    let alpha = (0.5 - d).clamp(0.0, 1.0);
                    for ch in 0..3 {
                        let fg = rgb[ch] * 2.0 - 1.0;
                        let v = alpha * fg + (1.0 - alpha) * bg;
                        image[IxDyn(&[ch, y, x])] = v.clamp(-1.0, 1.0) as f32;
                    }
                }
            }
            samples.push(LabeledSample {
                image,
                clean_label: domain,
                noisy_label: domain,
                sample_id: format!("d{domain}/s{k:05}"),
            });
        }
    }
    Dataset::from_samples(
        samples,
        c,
        size,
        3,
        (0..c).map(|d| format!("d{d}")).collect(),
    )
}
