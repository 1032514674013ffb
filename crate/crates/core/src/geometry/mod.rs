//! Deterministic geometry of the image-to-parameters pipeline: patch-token
//! grids, ROI feature cropping for hand and face boxes, and the flat
//! parameter-vector layout.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("patch size must be positive")]
    ZeroPatch,
    #[error("image {axis} of {size} px is not a positive multiple of the {patch} px patch")]
    NotDivisible {
        axis: &'static str,
        size: usize,
        patch: usize,
    },
    #[error("box must have positive, finite size, got {w}×{h}")]
    DegenerateBox { w: f64, h: f64 },
    #[error("box does not intersect the image")]
    BoxOutside,
    #[error("feature grid {h}×{w}×{c} needs {expected} values, found {found}")]
    GridSize {
        h: usize,
        w: usize,
        c: usize,
        expected: usize,
        found: usize,
    },
    #[error("output size must be positive")]
    EmptyOutput,
    #[error("{what}: expected {expected} values, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Patch-token grid covering an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenGrid {
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
    pub image_h: usize,
    pub image_w: usize,
}

impl TokenGrid {
    pub fn tokens(&self) -> usize {
        self.rows * self.cols
    }
}

pub fn token_grid(image_h: usize, image_w: usize, patch: usize) -> Result<TokenGrid, GeometryError> {
    if patch == 0 {
        return Err(GeometryError::ZeroPatch);
    }
    for (axis, size) in [("height", image_h), ("width", image_w)] {
        if size == 0 || size % patch != 0 {
            return Err(GeometryError::NotDivisible { axis, size, patch });
        }
    }
    Ok(TokenGrid {
        rows: image_h / patch,
        cols: image_w / patch,
        patch,
        image_h,
        image_w,
    })
}

/// Axis-aligned box in image-fraction units: center and size in `[0, 1]` terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormalizedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::DegenerateBox { w, h });
        }
        if !(cx.is_finite() && cy.is_finite())
            || cx + w / 2.0 <= 0.0
            || cx - w / 2.0 >= 1.0
            || cy + h / 2.0 <= 0.0
            || cy - h / 2.0 >= 1.0
        {
            return Err(GeometryError::BoxOutside);
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn full() -> Self {
        Self {
            cx: 0.5,
            cy: 0.5,
            w: 1.0,
            h: 1.0,
        }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    /// The box `inner`, given in this box's own fraction units, in image units.
    pub fn compose(&self, inner: &NormalizedBox) -> Result<NormalizedBox, GeometryError> {
        NormalizedBox::new(
            self.left() + inner.cx * self.w,
            self.top() + inner.cy * self.h,
            inner.w * self.w,
            inner.h * self.h,
        )
    }
}

/// Row-major `H × W × C` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        if data.len() != h * w * c || h == 0 || w == 0 || c == 0 {
            return Err(GeometryError::GridSize {
                h,
                w,
                c,
                expected: h * w * c,
                found: data.len(),
            });
        }
        Ok(Self { h, w, c, data })
    }

    pub fn from_fn(h: usize, w: usize, c: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data.push(f(y, x, ch));
                }
            }
        }
        Self { h, w, c, data }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }
}

fn sample_axis(coord: f64, size: usize) -> (usize, usize, f64) {
    let p = coord.clamp(0.0, (size - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(size - 1);
    (i0, i1, p - i0 as f64)
}

/// Bilinear resample of `features` over `bbox` onto an `out_h × out_w` lattice.
///
/// Output cell `(i, j)` samples the box at fraction `((j + ½)/out_w, (i + ½)/out_h)`,
/// mapped to feature coordinates with the half-pixel (align-corners false)
/// convention `u·W − ½`. Samples outside the grid clamp to the border.
pub fn roi_crop(
    features: &FeatureGrid,
    bbox: &NormalizedBox,
    out_h: usize,
    out_w: usize,
) -> Result<FeatureGrid, GeometryError> {
    if out_h == 0 || out_w == 0 {
        return Err(GeometryError::EmptyOutput);
    }
    let bbox = NormalizedBox::new(bbox.cx, bbox.cy, bbox.w, bbox.h)?;
    let (x0, y0) = (bbox.left(), bbox.top());
    let xs: Vec<_> = (0..out_w)
        .map(|j| {
            let u = x0 + (j as f64 + 0.5) / out_w as f64 * bbox.w;
            sample_axis(u * features.w as f64 - 0.5, features.w)
        })
        .collect();
    let ys: Vec<_> = (0..out_h)
        .map(|i| {
            let v = y0 + (i as f64 + 0.5) / out_h as f64 * bbox.h;
            sample_axis(v * features.h as f64 - 0.5, features.h)
        })
        .collect();
    let mut data = Vec::with_capacity(out_h * out_w * features.c);
    for &(ya, yb, ty) in &ys {
        for &(xa, xb, tx) in &xs {
            for ch in 0..features.c {
                let top = features.get(ya, xa, ch) * (1.0 - tx) + features.get(ya, xb, ch) * tx;
                let bottom = features.get(yb, xa, ch) * (1.0 - tx) + features.get(yb, xb, ch) * tx;
                data.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    FeatureGrid::new(out_h, out_w, features.c, data)
}

/// Default ROI output resolution per part.
pub const DEFAULT_ROI_SIZE: (usize, usize) = (8, 8);

/// Layout of the flat parameter vector: axis-angle pose for 55 joints, then
/// shape, expression and camera translation.
pub mod layout {
    use std::ops::Range;

    pub const POSE: Range<usize> = 0..165;
    pub const BETAS: Range<usize> = 165..175;
    pub const EXPRESSION: Range<usize> = 175..185;
    pub const CAMERA: Range<usize> = 185..188;
    pub const LEN: usize = 188;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedParams {
    pub pose: Vec<f64>,
    pub betas: Vec<f64>,
    pub expression: Vec<f64>,
    pub camera: Vec<f64>,
}

fn check(what: &'static str, values: &[f64], range: Range<usize>) -> Result<(), GeometryError> {
    if values.len() == range.len() {
        Ok(())
    } else {
        Err(GeometryError::LengthMismatch {
            what,
            expected: range.len(),
            found: values.len(),
        })
    }
}

pub fn pack_params(params: &PackedParams) -> Result<Vec<f64>, GeometryError> {
    check("pose", &params.pose, layout::POSE)?;
    check("betas", &params.betas, layout::BETAS)?;
    check("expression", &params.expression, layout::EXPRESSION)?;
    check("camera", &params.camera, layout::CAMERA)?;
    let mut out = Vec::with_capacity(layout::LEN);
    out.extend_from_slice(&params.pose);
    out.extend_from_slice(&params.betas);
    out.extend_from_slice(&params.expression);
    out.extend_from_slice(&params.camera);
    Ok(out)
}

pub fn unpack_params(flat: &[f64]) -> Result<PackedParams, GeometryError> {
    if flat.len() != layout::LEN {
        return Err(GeometryError::LengthMismatch {
            what: "packed parameters",
            expected: layout::LEN,
            found: flat.len(),
        });
    }
    Ok(PackedParams {
        pose: flat[layout::POSE].to_vec(),
        betas: flat[layout::BETAS].to_vec(),
        expression: flat[layout::EXPRESSION].to_vec(),
        camera: flat[layout::CAMERA].to_vec(),
    })
}
