//! Random crop and horizontal mirror augmentation.

use rand::Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{rng_from_seed, Element, Tensor};

/// Input and crop extents, `(height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    pub input: (usize, usize),
    pub crop: (usize, usize),
}

impl CropSpec {
    /// 144x144 aligned faces cropped to 128x128.
    pub const FACE: CropSpec = CropSpec {
        input: (144, 144),
        crop: (128, 128),
    };

    pub fn new(input: (usize, usize), crop: (usize, usize)) -> Result<Self> {
        if crop.0 == 0 || crop.1 == 0 || crop.0 > input.0 || crop.1 > input.1 {
            return Err(Error::shape(format!("crop {crop:?} does not fit input {input:?}")));
        }
        Ok(CropSpec { input, crop })
    }

    fn slack(&self) -> (usize, usize) {
        (self.input.0 - self.crop.0, self.input.1 - self.crop.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub mirrored: bool,
}

/// Train mode: uniform offsets in `0..=slack` per axis and a fair-coin mirror.
/// Eval mode: centered window (offset `slack / 2`), never mirrored.
pub fn crop_window(spec: &CropSpec, mode: Mode, seed: u64) -> CropWindow {
    let (sy, sx) = spec.slack();
    match mode {
        Mode::Eval => CropWindow {
            top: sy / 2,
            left: sx / 2,
            mirrored: false,
        },
        Mode::Train => {
            let mut rng = rng_from_seed(seed);
            CropWindow {
                top: rng.random_range(0..=sy),
                left: rng.random_range(0..=sx),
                mirrored: rng.random_bool(0.5),
            }
        }
    }
}

/// Crops (and possibly mirrors) a `[C, H, W]` image whose extent must equal `spec.input`.
pub fn crop_mirror<T: Element>(image: &Tensor<T>, spec: &CropSpec, mode: Mode, seed: u64) -> Result<Tensor<T>> {
    let [c, h, w] = image.dims()[..] else {
        return Err(Error::shape(format!(
            "expected a [C, H, W] image, got {}",
            image.shape()
        )));
    };
    if (h, w) != spec.input {
        return Err(Error::shape(format!(
            "expected a {}x{} image, got {h}x{w}",
            spec.input.0, spec.input.1
        )));
    }
    let win = crop_window(spec, mode, seed);
    let (ch, cw) = spec.crop;
    let src = image.data();
    let mut out = Vec::with_capacity(c * ch * cw);
    for plane in 0..c {
        for y in 0..ch {
            let row = (plane * h + win.top + y) * w + win.left;
            let row = &src[row..row + cw];
            if win.mirrored {
                out.extend(row.iter().rev());
            } else {
                out.extend_from_slice(row);
            }
        }
    }
    Tensor::from_vec(&[c, ch, cw], out)
}

/// Reverses the column order of every row of a tensor with rank >= 2.
pub fn mirror_horizontal<T: Element>(image: &Tensor<T>) -> Tensor<T> {
    let w = *image.dims().last().expect("rank >= 1");
    let mut out = image.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}
