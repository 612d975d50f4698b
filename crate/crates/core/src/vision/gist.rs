//! Gist scene descriptor: oriented band-pass filtering in the frequency
//! domain, magnitude pooled on a coarse spatial grid.
//!
//! The image is converted to grayscale, resized to a fixed 256x256 working
//! raster, filtered with 32 Gabor-style transfer functions (4 scales x 8
//! orientations), and each filter's response magnitude is averaged over a
//! 4x4 grid: 32 x 16 = 512 values, ordered filter-major
//! (scale, orientation, then cell).

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::vision::raster::RasterImage;

/// Side of the working raster the image is resized to (aspect-distorting).
pub const WORKING_SIZE: usize = 256;
pub const SCALES: usize = 4;
pub const ORIENTATIONS: usize = 8;
/// Pooling grid is GRID x GRID.
pub const GRID: usize = 4;
/// Output dimension: SCALES x ORIENTATIONS x GRID^2.
pub const OUTPUT_DIM: usize = SCALES * ORIENTATIONS * GRID * GRID;

/// Center frequency (cycles/pixel) of a scale band, halving per scale.
fn center_frequency(scale: usize) -> f64 {
    0.25 / (1 << scale) as f64
}

/// Signed frequency of DFT bin k out of n, in cycles/pixel.
fn signed_freq(k: usize, n: usize) -> f64 {
    let k = k as isize;
    let n = n as isize;
    let s = if k <= n / 2 { k } else { k - n };
    s as f64 / n as f64
}

/// Transfer function of one filter at one frequency bin. A radial Gaussian
/// around the scale's center frequency times an angular Gaussian around the
/// orientation; single-lobed, zero at DC so constant images produce no
/// response.
fn transfer(u: usize, v: usize, scale: usize, orientation: usize) -> f64 {
    let fy = signed_freq(u, WORKING_SIZE);
    let fx = signed_freq(v, WORKING_SIZE);
    let r = (fx * fx + fy * fy).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let f0 = center_frequency(scale);
    let sigma_r = f0 / 3.0;
    let sigma_t = PI / 10.0;
    let theta = orientation as f64 * PI / ORIENTATIONS as f64;
    let phi = fy.atan2(fx);
    let dt = (phi - theta + PI).rem_euclid(2.0 * PI) - PI;
    (-(r - f0) * (r - f0) / (2.0 * sigma_r * sigma_r)).exp()
        * (-dt * dt / (2.0 * sigma_t * sigma_t)).exp()
}

/// Grayscale [0,1] plane resized to WORKING_SIZE with bilinear sampling.
fn resized_gray(img: &RasterImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let lum = img.luminance();
    if w == WORKING_SIZE && h == WORKING_SIZE {
        return lum.iter().map(|v| v / 255.0).collect();
    }
    let n = WORKING_SIZE;
    let mut out = Vec::with_capacity(n * n);
    for oy in 0..n {
        let sy = ((oy as f64 + 0.5) * h as f64 / n as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..n {
            let sx = ((ox as f64 + 0.5) * w as f64 / n as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = lum[y0 * w + x0] * (1.0 - fx) + lum[y0 * w + x1] * fx;
            let bot = lum[y1 * w + x0] * (1.0 - fx) + lum[y1 * w + x1] * fx;
            out.push((top * (1.0 - fy) + bot * fy) / 255.0);
        }
    }
    out
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// In-place 2-D FFT over an n x n row-major buffer; `normalize` divides by n
/// per pass (used for the inverse).
fn fft2(buf: &mut [Complex64], n: usize, plan: &Arc<dyn Fft<f64>>, normalize: bool) {
    for _ in 0..2 {
        for row in buf.chunks_exact_mut(n) {
            plan.process(row);
        }
        if normalize {
            let inv = 1.0 / n as f64;
            for v in buf.iter_mut() {
                *v *= inv;
            }
        }
        transpose(buf, n);
    }
}

/// Gist descriptor of an image: 512 nonnegative pooled magnitudes.
pub fn gist(img: &RasterImage) -> Result<Vec<f64>> {
    let n = WORKING_SIZE;
    let gray = resized_gray(img);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut spectrum: Vec<Complex64> = gray.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft2(&mut spectrum, n, &forward, false);

    let cell = n / GRID;
    let mut out = Vec::with_capacity(OUTPUT_DIM);
    let mut filtered = vec![Complex64::new(0.0, 0.0); n * n];
    for scale in 0..SCALES {
        for orientation in 0..ORIENTATIONS {
            for u in 0..n {
                for v in 0..n {
                    filtered[u * n + v] = spectrum[u * n + v] * transfer(u, v, scale, orientation);
                }
            }
            fft2(&mut filtered, n, &inverse, true);
            for ci in 0..GRID {
                for cj in 0..GRID {
                    let mut acc = 0.0;
                    for y in ci * cell..(ci + 1) * cell {
                        for x in cj * cell..(cj + 1) * cell {
                            acc += filtered[y * n + x].norm();
                        }
                    }
                    out.push(acc / (cell * cell) as f64);
                }
            }
        }
    }
    Ok(out)
}
