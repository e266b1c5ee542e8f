use crate::image::Image;
use crate::scalar::Scalar;
use crate::transform::{Action, AffineTransform};

/// Sample positions closer than this (in pixels) to a grid point are treated
/// as lying on it, which keeps whole-pixel moves exact.
const GRID_SNAP: f64 = 1e-5;

#[inline]
fn split(coord: f64) -> (isize, f64) {
    let base = coord.floor();
    let frac = coord - base;
    if frac < GRID_SNAP {
        (base as isize, 0.0)
    } else if frac > 1.0 - GRID_SNAP {
        (base as isize + 1, 0.0)
    } else {
        (base as isize, frac)
    }
}

/// Bilinear sample at pixel coordinates `(x, y)` (pixel centres on integers)
/// with zero padding outside the image.
pub fn sample_bilinear<T: Scalar>(img: &Image<T>, x: f64, y: f64) -> T {
    let (x0, fx) = split(x);
    let (y0, fy) = split(y);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let px = |xi: isize, yi: isize| -> T {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            T::zero()
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    if fx == 0.0 && fy == 0.0 {
        return px(x0, y0);
    }
    let (wx1, wy1) = (T::lit(fx), T::lit(fy));
    let (wx0, wy0) = (T::one() - wx1, T::one() - wy1);
    let mut v = px(x0, y0) * wx0 * wy0;
    if fx != 0.0 {
        v += px(x0 + 1, y0) * wx1 * wy0;
    }
    if fy != 0.0 {
        v += px(x0, y0 + 1) * wx0 * wy1;
        if fx != 0.0 {
            v += px(x0 + 1, y0 + 1) * wx1 * wy1;
        }
    }
    v
}

/// Backward-warps `img`: every output pixel samples the source location the
/// transform maps it to. Results are clamped to `[0, 1]`.
pub fn warp<T: Scalar>(img: &Image<T>, t: &AffineTransform<T>) -> Image<T> {
    let (w, h) = (img.width(), img.height());
    let m = t.cast::<f64>().rows();
    let (wf, hf) = (w as f64, h as f64);
    let mut out = Image::zeros(w, h);
    let px = out.pixels_mut();
    for i in 0..h {
        let yn = (2.0 * i as f64 + 1.0) / hf - 1.0;
        for j in 0..w {
            let xn = (2.0 * j as f64 + 1.0) / wf - 1.0;
            let xs_n = m[0][0] * xn + m[0][1] * yn + m[0][2];
            let ys_n = m[1][0] * xn + m[1][1] * yn + m[1][2];
            let xs = ((xs_n + 1.0) * wf - 1.0) * 0.5;
            let ys = ((ys_n + 1.0) * hf - 1.0) * 0.5;
            let v = sample_bilinear(img, xs, ys);
            px[i * w + j] = v.max(T::zero()).min(T::one());
        }
    }
    out
}

/// How a sequence of actions is turned into pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ApplyMode {
    /// One resampling per action, as seen by the policy during a rollout.
    #[default]
    Stepwise,
    /// Multiply the matrices first and resample once.
    Composed,
}

/// Applies `actions` front to back on a square canvas of the image's width.
pub fn apply_sequence<T: Scalar>(img: &Image<T>, actions: &[Action], mode: ApplyMode) -> Image<T> {
    let size = img.width();
    match mode {
        ApplyMode::Stepwise => {
            let mut cur = img.clone();
            for &a in actions {
                if a != Action::Identity {
                    cur = warp(&cur, &a.to_matrix(size));
                }
            }
            cur
        }
        ApplyMode::Composed => {
            let total = actions
                .iter()
                .fold(AffineTransform::identity(), |acc, a| acc.compose(&a.to_matrix(size)));
            if total == AffineTransform::identity() {
                img.clone()
            } else {
                warp(img, &total)
            }
        }
    }
}
