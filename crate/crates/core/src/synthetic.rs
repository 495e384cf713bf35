//! Generated datasets for desk-scale experiments and pipeline fixtures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{split_labels, write_pgm, FaceDataset, GrayImage, Landmarks5, Similarity};
use crate::error::{Error, Result};
use crate::tensor::{rng_from_seed, Tensor};

/// Parameters of [`toy_identities`].
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub identities: usize,
    pub per_identity: usize,
    /// Square image side.
    pub size: usize,
    /// Maximum per-sample translation in pixels, each axis.
    pub max_shift: i32,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            identities: 10,
            per_identity: 60,
            size: 36,
            max_shift: 2,
            noise: 0.05,
            seed: 0,
        }
    }
}

struct Blob {
    x: f64,
    y: f64,
    sigma: f64,
    amp: f64,
}

fn prototype(rng: &mut ChaCha8Rng, size: usize) -> Vec<Blob> {
    let lo = size as f64 * 0.2;
    let hi = size as f64 * 0.8;
    (0..5)
        .map(|_| Blob {
            x: rng.random_range(lo..hi),
            y: rng.random_range(lo..hi),
            sigma: rng.random_range(2.0..5.0) * size as f64 / 36.0,
            amp: rng.random_range(0.25..0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        })
        .collect()
}

fn render(blobs: &[Blob], size: usize, dx: f64, dy: f64, gain: f64) -> Vec<f64> {
    let mut out = vec![0.5; size * size];
    for (i, v) in out.iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64 - dx, (i / size) as f64 - dy);
        for b in blobs {
            let r2 = (x - b.x).powi(2) + (y - b.y).powi(2);
            *v += gain * b.amp * (-r2 / (2.0 * b.sigma * b.sigma)).exp();
        }
    }
    out
}

/// Identities are random sums of Gaussian blobs; samples are shifted,
/// contrast-jittered, noisy renders. One sample per identity is held out
/// for validation by the usual split rule.
pub fn toy_identities(spec: &ToySpec) -> FaceDataset<f32> {
    let mut rng = rng_from_seed(spec.seed);
    let noise = Normal::new(0.0, spec.noise.max(1e-12)).expect("positive std");
    let protos: Vec<_> = (0..spec.identities).map(|_| prototype(&mut rng, spec.size)).collect();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (id, blobs) in protos.iter().enumerate() {
        for _ in 0..spec.per_identity {
            let dx = rng.random_range(-spec.max_shift..=spec.max_shift) as f64;
            let dy = rng.random_range(-spec.max_shift..=spec.max_shift) as f64;
            let gain = rng.random_range(0.8..1.2);
            let data: Vec<f32> = render(blobs, spec.size, dx, dy, gain)
                .into_iter()
                .map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32)
                .collect();
            images.push(Tensor::from_vec(&[1, spec.size, spec.size], data).expect("valid dims"));
            labels.push(id);
        }
    }
    let split = split_labels(&labels, spec.seed);
    FaceDataset::new(images, labels, split).expect("consistent construction")
}

/// Landmarks of an upright face on the 144-pixel canonical canvas.
pub const CANONICAL_LANDMARKS: [f64; 10] = [52.0, 60.0, 92.0, 60.0, 72.0, 85.0, 55.0, 110.0, 89.0, 110.0];

/// Procedural face in canonical coordinates: head ellipse, eyes, nose,
/// mouth, plus identity-specific texture.
struct FaceModel {
    head: f64,
    eye: f64,
    mouth: f64,
    marks: Vec<Blob>,
}

impl FaceModel {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        FaceModel {
            head: rng.random_range(0.55..0.8),
            eye: rng.random_range(4.0..7.0),
            mouth: rng.random_range(12.0..20.0),
            marks: (0..4)
                .map(|_| Blob {
                    x: rng.random_range(40.0..104.0),
                    y: rng.random_range(40.0..120.0),
                    sigma: rng.random_range(3.0..8.0),
                    amp: rng.random_range(-0.25..0.25),
                })
                .collect(),
        }
    }

    fn intensity(&self, u: f64, v: f64) -> f64 {
        let inside = ((u - 72.0) / 48.0).powi(2) + ((v - 80.0) / 62.0).powi(2) <= 1.0;
        if !inside {
            return 0.15;
        }
        let mut val = self.head;
        let dark = |cx: f64, cy: f64, rx: f64, ry: f64| ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2) <= 1.0;
        if dark(52.0, 60.0, self.eye, self.eye * 0.6) || dark(92.0, 60.0, self.eye, self.eye * 0.6) {
            val = 0.1;
        }
        if dark(72.0, 110.0, self.mouth, 4.0) {
            val = 0.25;
        }
        if dark(72.0, 85.0, 4.0, 8.0) {
            val -= 0.15;
        }
        for m in &self.marks {
            val += m.amp * (-((u - m.x).powi(2) + (v - m.y).powi(2)) / (2.0 * m.sigma * m.sigma)).exp();
        }
        val.clamp(0.0, 1.0)
    }
}

/// Files written by [`write_face_fixture`].
#[derive(Debug, Clone)]
pub struct FaceFixture {
    /// `root/<identity>/<image>.pgm`.
    pub image_root: PathBuf,
    pub landmark_file: PathBuf,
    /// Every image path relative to `image_root`, sorted.
    pub images: Vec<String>,
}

/// Writes `identities × per_identity` unaligned face photos of `size`
/// pixels, each a rotated, scaled and shifted render of its identity's face,
/// together with the exact landmark file.
pub fn write_face_fixture(
    dir: impl AsRef<Path>,
    identities: usize,
    per_identity: usize,
    size: usize,
    seed: u64,
) -> Result<FaceFixture> {
    let dir = dir.as_ref();
    let image_root = dir.join("images");
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, 0.02).expect("positive std");
    let canonical = Landmarks5::from_coords(CANONICAL_LANDMARKS)?;
    let mut lm_text = String::new();
    let mut images = Vec::new();
    for id in 0..identities {
        let face = FaceModel::random(&mut rng);
        let name = format!("id{id:03}");
        let id_dir = image_root.join(&name);
        fs::create_dir_all(&id_dir).map_err(|e| Error::io(&id_dir, e))?;
        for k in 0..per_identity {
            let angle = rng.random_range(-25.0f64..25.0).to_radians();
            let scale = rng.random_range(0.8..1.25);
            let centre = size as f64 / 2.0;
            // Canonical centre (72, 80) lands near the photo centre.
            let (a, b) = (scale * angle.cos(), scale * angle.sin());
            let rot = Similarity { a, b, tx: 0.0, ty: 0.0 }.apply((72.0, 80.0));
            let t = Similarity {
                a,
                b,
                tx: centre - rot.0 + rng.random_range(-6.0..6.0),
                ty: centre - rot.1 + rng.random_range(-6.0..6.0),
            };
            let inv = t.inverse();
            let pixels = (0..size * size)
                .map(|i| {
                    let (u, v) = inv.apply(((i % size) as f64, (i / size) as f64));
                    ((face.intensity(u, v) + noise.sample(&mut rng)).clamp(0.0, 1.0) * 255.0).round() as u8
                })
                .collect();
            let rel = format!("{name}/{k:03}.pgm");
            write_pgm(image_root.join(&rel), &GrayImage::new(size, size, pixels)?)?;
            let lm = canonical.map(&t);
            write!(lm_text, "{rel}").expect("writing to a String cannot fail");
            for c in lm.coords() {
                write!(lm_text, " {c:.4}").expect("writing to a String cannot fail");
            }
            lm_text.push('\n');
            images.push(rel);
        }
    }
    let landmark_file = dir.join("landmarks.txt");
    fs::write(&landmark_file, lm_text).map_err(|e| Error::io(&landmark_file, e))?;
    Ok(FaceFixture {
        image_root,
        landmark_file,
        images,
    })
}
