use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub type Point = (f64, f64);

/// Five facial points in source pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks5 {
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose: Point,
    pub mouth_left: Point,
    pub mouth_right: Point,
}

fn midpoint(a: Point, b: Point) -> Point {
    ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
}

fn distance(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

impl Landmarks5 {
    /// From `x1 y1 .. x5 y5` in the order left eye, right eye, nose, left and
    /// right mouth corner.
    pub fn from_coords(c: [f64; 10]) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Alignment("landmark coordinates must be finite".into()));
        }
        Ok(Landmarks5 {
            left_eye: (c[0], c[1]),
            right_eye: (c[2], c[3]),
            nose: (c[4], c[5]),
            mouth_left: (c[6], c[7]),
            mouth_right: (c[8], c[9]),
        })
    }

    pub fn coords(&self) -> [f64; 10] {
        let p = self.points();
        [
            p[0].0, p[0].1, p[1].0, p[1].1, p[2].0, p[2].1, p[3].0, p[3].1, p[4].0, p[4].1,
        ]
    }

    pub fn points(&self) -> [Point; 5] {
        [
            self.left_eye,
            self.right_eye,
            self.nose,
            self.mouth_left,
            self.mouth_right,
        ]
    }

    pub fn eye_mid(&self) -> Point {
        midpoint(self.left_eye, self.right_eye)
    }

    pub fn mouth_mid(&self) -> Point {
        midpoint(self.mouth_left, self.mouth_right)
    }

    pub fn map(&self, t: &Similarity) -> Landmarks5 {
        Landmarks5 {
            left_eye: t.apply(self.left_eye),
            right_eye: t.apply(self.right_eye),
            nose: t.apply(self.nose),
            mouth_left: t.apply(self.mouth_left),
            mouth_right: t.apply(self.mouth_right),
        }
    }
}

/// `x' = a·x − b·y + tx`, `y' = b·x + a·y + ty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn apply(&self, (x, y): Point) -> Point {
        (self.a * x - self.b * y + self.tx, self.b * x + self.a * y + self.ty)
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }

    /// Counter-clockwise rotation in radians (y axis pointing down).
    pub fn angle(&self) -> f64 {
        self.b.atan2(self.a)
    }

    pub fn inverse(&self) -> Similarity {
        let d = self.a * self.a + self.b * self.b;
        let (a, b) = (self.a / d, -self.b / d);
        Similarity {
            a,
            b,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        }
    }
}

/// Output canvas geometry for [`align_face_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignTarget {
    pub size: usize,
    /// Canvas position of the eye midpoint.
    pub eye_anchor: Point,
    pub eye_mouth_distance: f64,
}

impl Default for AlignTarget {
    fn default() -> Self {
        AlignTarget {
            size: 144,
            eye_anchor: (72.0, 60.0),
            eye_mouth_distance: 50.0,
        }
    }
}

/// Rotation levelling the eye line, uniform scale fixing the eye-to-mouth
/// distance, translation placing the eye midpoint on the anchor.
///
/// The rotation is the smallest one making the eyes horizontal, so swapped
/// left/right labels do not flip the face.
pub fn fit_similarity(lm: &Landmarks5, target: &AlignTarget) -> Result<Similarity> {
    let (dx, dy) = (lm.right_eye.0 - lm.left_eye.0, lm.right_eye.1 - lm.left_eye.1);
    let eye_dist = dx.hypot(dy);
    let mouth_dist = distance(lm.eye_mid(), lm.mouth_mid());
    if eye_dist.is_nan() || eye_dist <= 1e-9 {
        return Err(Error::Alignment("eye points coincide".into()));
    }
    if mouth_dist.is_nan() || mouth_dist <= 1e-9 {
        return Err(Error::Alignment("eye midpoint coincides with mouth midpoint".into()));
    }
    let (ux, uy) = if dx < 0.0 { (-dx, -dy) } else { (dx, dy) };
    let s = target.eye_mouth_distance / mouth_dist;
    // Rotation by -atan2(uy, ux).
    let a = s * ux / eye_dist;
    let b = -s * uy / eye_dist;
    let m = lm.eye_mid();
    let rotated = Similarity { a, b, tx: 0.0, ty: 0.0 }.apply(m);
    Ok(Similarity {
        a,
        b,
        tx: target.eye_anchor.0 - rotated.0,
        ty: target.eye_anchor.1 - rotated.1,
    })
}

/// Samples a `[1, H, W]` image at `(x, y)`; pixels outside the image read as 0.
fn bilinear<T: Element>(data: &[T], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            data[yi as usize * w + xi as usize].as_f64()
        }
    };
    let mut v = 0.0;
    for (xi, wx) in [(x0, 1.0 - fx), (x0 + 1.0, fx)] {
        for (yi, wy) in [(y0, 1.0 - fy), (y0 + 1.0, fy)] {
            if wx * wy != 0.0 {
                v += wx * wy * at(xi, yi);
            }
        }
    }
    v
}

/// Resamples `image` (`[1, H, W]`) through `t` onto a `size`×`size` canvas.
pub fn warp<T: Element>(image: &Tensor<T>, t: &Similarity, size: usize) -> Result<Tensor<T>> {
    let (h, w) = match image.dims() {
        [1, h, w] => (*h, *w),
        _ => {
            return Err(Error::shape(format!(
                "expected a [1, H, W] image, got {}",
                image.shape()
            )))
        }
    };
    let inv = t.inverse();
    let src = image.data();
    let mut out = Vec::with_capacity(size * size);
    for v in 0..size {
        for u in 0..size {
            let (x, y) = inv.apply((u as f64, v as f64));
            out.push(T::of(bilinear(src, h, w, x, y)));
        }
    }
    Tensor::from_vec(&[1, size, size], out)
}

/// Normalizes a face to the default 144×144 canvas.
pub fn align_face<T: Element>(image: &Tensor<T>, lm: &Landmarks5) -> Result<Tensor<T>> {
    align_face_with(image, lm, &AlignTarget::default())
}

pub fn align_face_with<T: Element>(image: &Tensor<T>, lm: &Landmarks5, target: &AlignTarget) -> Result<Tensor<T>> {
    let t = fit_similarity(lm, target)?;
    warp(image, &t, target.size)
}
