//! Adaptive tensor-product Gauss-Legendre quadrature on rectangles, used
//! for density integrals against non-mixture truths.

use crate::error::{Error, Result};

/// 8-point Gauss-Legendre nodes/weights on [-1, 1].
const GL8_X: [f64; 8] = [
    -0.9602898564975362,
    -0.7966664774136267,
    -0.525_532_409_916_329,
    -0.1834346424956498,
    0.1834346424956498,
    0.525_532_409_916_329,
    0.7966664774136267,
    0.9602898564975362,
];
const GL8_W: [f64; 8] = [
    0.1012285362903763,
    0.2223810344533745,
    0.3137066458778873,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

fn panel_gl8(f: &dyn Fn(f64, f64) -> f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let hx = 0.5 * (x1 - x0);
    let hy = 0.5 * (y1 - y0);
    let cx = 0.5 * (x0 + x1);
    let cy = 0.5 * (y0 + y1);
    let mut acc = 0.0;
    for (xi, wx) in GL8_X.iter().zip(&GL8_W) {
        let x = cx + hx * xi;
        let mut row = 0.0;
        for (yi, wy) in GL8_X.iter().zip(&GL8_W) {
            row += wy * f(x, cy + hy * yi);
        }
        acc += wx * row;
    }
    acc * hx * hy
}

/// Integrates `f` over `[x0, x1] x [y0, y1]` by recursive panel splitting:
/// a panel is accepted when its value agrees with its four-way refinement
/// within the share of the global tolerance it carries.
pub fn adaptive_2d(
    f: &dyn Fn(f64, f64) -> f64,
    bounds: (f64, f64, f64, f64),
    rel_tol: f64,
) -> Result<f64> {
    let (x0, x1, y0, y1) = bounds;
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::QuadratureFailure("empty integration box".into()));
    }
    // Start from an 8x8 panel grid so a localized integrand cannot hide
    // inside one coarse panel's quadrature nodes. The caller's box must be
    // commensurate with the integrand's finest scale; a feature thinner
    // than ~1/64 of the box can still evade the scale estimate.
    let mut total = 0.0;
    let nx = 8;
    let ny = 8;
    // First pass to estimate the scale.
    let mut coarse = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let px0 = x0 + (x1 - x0) * i as f64 / nx as f64;
            let px1 = x0 + (x1 - x0) * (i + 1) as f64 / nx as f64;
            let py0 = y0 + (y1 - y0) * j as f64 / ny as f64;
            let py1 = y0 + (y1 - y0) * (j + 1) as f64 / ny as f64;
            coarse += panel_gl8(f, px0, px1, py0, py1).abs();
        }
    }
    let scale = coarse.max(f64::MIN_POSITIVE);
    for i in 0..nx {
        for j in 0..ny {
            let px0 = x0 + (x1 - x0) * i as f64 / nx as f64;
            let px1 = x0 + (x1 - x0) * (i + 1) as f64 / nx as f64;
            let py0 = y0 + (y1 - y0) * j as f64 / ny as f64;
            let py1 = y0 + (y1 - y0) * (j + 1) as f64 / ny as f64;
            total += refine(f, px0, px1, py0, py1, rel_tol * scale / (nx * ny) as f64, 0)?;
        }
    }
    Ok(total)
}

fn refine(
    f: &dyn Fn(f64, f64) -> f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    abs_tol: f64,
    depth: usize,
) -> Result<f64> {
    let whole = panel_gl8(f, x0, x1, y0, y1);
    let xm = 0.5 * (x0 + x1);
    let ym = 0.5 * (y0 + y1);
    let split = panel_gl8(f, x0, xm, y0, ym)
        + panel_gl8(f, xm, x1, y0, ym)
        + panel_gl8(f, x0, xm, ym, y1)
        + panel_gl8(f, xm, x1, ym, y1);
    if (whole - split).abs() <= abs_tol.max(1e-300) {
        return Ok(split);
    }
    if depth >= 24 {
        return Err(Error::QuadratureFailure(format!(
            "panel [{x0},{x1}]x[{y0},{y1}] did not converge (residual {})",
            (whole - split).abs()
        )));
    }
    Ok(refine(f, x0, xm, y0, ym, abs_tol / 4.0, depth + 1)?
        + refine(f, xm, x1, y0, ym, abs_tol / 4.0, depth + 1)?
        + refine(f, x0, xm, ym, y1, abs_tol / 4.0, depth + 1)?
        + refine(f, xm, x1, ym, y1, abs_tol / 4.0, depth + 1)?)
}
