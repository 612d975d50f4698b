//! The four MPEG-7-style visual descriptors: color layout (192), color
//! structure (256), edge histogram (80), and scalable color (256). The
//! descriptors follow the standard's structure but stay quantization-free;
//! color structure quantizes in HSV rather than HMMD so that it shares the
//! scalable color quantizer.

// Grid loops index several parallel planes at once.
#![allow(clippy::needless_range_loop)]

use crate::error::Result;
use crate::vision::color::{quantize_hsv_256, rgb_to_ycbcr, HSV_BINS};
use crate::vision::dct::{dct2_8x8, zigzag_order};
use crate::vision::raster::RasterImage;

/// Color layout: 8x8 grid of representative colors in YCbCr, 2-D DCT per
/// channel, coefficients concatenated in zigzag order (Y, Cb, Cr).
pub fn color_layout(img: &RasterImage) -> Result<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    let mut grids = [[[0.0f64; 8]; 8]; 3]; // per-channel 8x8 representative colors
    for gy in 0..8 {
        let y0 = gy * h / 8;
        let y1 = (gy + 1) * h / 8;
        for gx in 0..8 {
            let x0 = gx * w / 8;
            let x1 = (gx + 1) * w / 8;
            let mut sum = [0.0f64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let [r, g, b] = img.pixel(x, y);
                    sum[0] += r as f64;
                    sum[1] += g as f64;
                    sum[2] += b as f64;
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            let [y, cb, cr] = rgb_to_ycbcr(sum[0] / count, sum[1] / count, sum[2] / count);
            grids[0][gy][gx] = y;
            grids[1][gy][gx] = cb;
            grids[2][gy][gx] = cr;
        }
    }
    let order = zigzag_order();
    let mut out = Vec::with_capacity(192);
    for grid in &grids {
        let coeffs = dct2_8x8(grid);
        for (r, c) in order {
            out.push(coeffs[r][c]);
        }
    }
    Ok(out)
}

/// Color structure: 256-bin histogram counting, for each quantized color,
/// the fraction of 8x8 window positions that contain it at least once.
pub fn color_structure(img: &RasterImage) -> Result<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    let mut bins = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = img.pixel(x, y);
            bins.push(quantize_hsv_256(r, g, b) as u16);
        }
    }
    let mut counts = vec![0u64; HSV_BINS];
    let positions = ((w - 7) * (h - 7)) as f64;
    for y0 in 0..h - 7 {
        for x0 in 0..w - 7 {
            // 256-bit occupancy mask for this window position.
            let mut present = [0u64; 4];
            for y in y0..y0 + 8 {
                let row = y * w;
                for x in x0..x0 + 8 {
                    let bin = bins[row + x] as usize;
                    present[bin / 64] |= 1u64 << (bin % 64);
                }
            }
            for (word, mask) in present.iter().enumerate() {
                let mut m = *mask;
                while m != 0 {
                    let bit = m.trailing_zeros() as usize;
                    counts[word * 64 + bit] += 1;
                    m &= m - 1;
                }
            }
        }
    }
    Ok(counts.iter().map(|c| *c as f64 / positions).collect())
}

/// Default edge-strength threshold: a macro-block whose strongest filter
/// response does not exceed it counts toward no bin.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 11.0;

/// Edge histogram with the default threshold. See
/// [`edge_histogram_with_threshold`].
pub fn edge_histogram(img: &RasterImage) -> Result<Vec<f64>> {
    edge_histogram_with_threshold(img, DEFAULT_EDGE_THRESHOLD)
}

/// Edge histogram: the image is split 4x4 into 16 sub-images; each
/// sub-image's 2x2-pixel macro-blocks are classified by five edge filters
/// (vertical, horizontal, 45 degree, 135 degree, non-directional); the 16
/// local 5-bin histograms, normalized by macro-block count, are
/// concatenated.
pub fn edge_histogram_with_threshold(img: &RasterImage, threshold: f64) -> Result<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    let lum = img.luminance();
    let mut out = Vec::with_capacity(80);
    for si in 0..4 {
        let y0 = si * h / 4;
        let y1 = (si + 1) * h / 4;
        for sj in 0..4 {
            let x0 = sj * w / 4;
            let x1 = (sj + 1) * w / 4;
            let mut hist = [0.0f64; 5];
            let mut blocks = 0usize;
            let mut by = y0;
            while by + 1 < y1 {
                let mut bx = x0;
                while bx + 1 < x1 {
                    let a = lum[by * w + bx];
                    let b = lum[by * w + bx + 1];
                    let c = lum[(by + 1) * w + bx];
                    let d = lum[(by + 1) * w + bx + 1];
                    let responses = [
                        (a - b + c - d).abs(),                         // vertical
                        (a + b - c - d).abs(),                         // horizontal
                        (std::f64::consts::SQRT_2 * (a - d)).abs(),    // 45 degree
                        (std::f64::consts::SQRT_2 * (b - c)).abs(),    // 135 degree
                        (2.0 * a - 2.0 * b - 2.0 * c + 2.0 * d).abs(), // non-directional
                    ];
                    let mut best = 0;
                    for i in 1..5 {
                        if responses[i] > responses[best] {
                            best = i;
                        }
                    }
                    if responses[best] > threshold {
                        hist[best] += 1.0;
                    }
                    blocks += 1;
                    bx += 2;
                }
                by += 2;
            }
            for v in hist {
                out.push(v / blocks as f64);
            }
        }
    }
    Ok(out)
}

/// Unnormalized Haar cascade: pairwise sums go to the front, differences to
/// the back, then the sums are transformed again. Coefficient 0 ends up as
/// the total of the input.
pub(crate) fn haar_cascade(values: &mut [f64]) {
    let mut len = values.len();
    let mut scratch = vec![0.0f64; len];
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            scratch[i] = values[2 * i] + values[2 * i + 1];
            scratch[half + i] = values[2 * i] - values[2 * i + 1];
        }
        values[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
}

/// Scalable color: 256-bin HSV histogram (16x4x4) normalized to sum 1,
/// then passed through the 1-D Haar cascade.
pub fn scalable_color(img: &RasterImage) -> Result<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    let mut hist = vec![0.0f64; HSV_BINS];
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = img.pixel(x, y);
            hist[quantize_hsv_256(r, g, b)] += 1.0;
        }
    }
    let total = (w * h) as f64;
    for v in hist.iter_mut() {
        *v /= total;
    }
    haar_cascade(&mut hist);
    Ok(hist)
}

/// The four descriptors concatenated: CL(192) CS(256) EH(80) SC(256) = 784.
pub fn mpeg7_descriptor(img: &RasterImage) -> Result<Vec<f64>> {
    let mut out = color_layout(img)?;
    out.extend(color_structure(img)?);
    out.extend(edge_histogram(img)?);
    out.extend(scalable_color(img)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(w: usize, h: usize, rgb: [u8; 3]) -> RasterImage {
        RasterImage::from_fn(w, h, |_, _| rgb).unwrap()
    }

    #[test]
    fn color_layout_uniform_image_has_only_dc() {
        let img = uniform(16, 16, [90, 160, 40]);
        let cl = color_layout(&img).unwrap();
        assert_eq!(cl.len(), 192);
        // Zigzag position 0 of each channel is the DC term.
        for ch in 0..3 {
            for k in 1..64 {
                assert!(cl[ch * 64 + k].abs() < 1e-9, "AC coeff {k} of channel {ch}");
            }
        }
        // DC of Y is the BT.601 luminance of the uniform color.
        let y = 0.299 * 90.0 + 0.587 * 160.0 + 0.114 * 40.0;
        assert!((cl[0] - y).abs() < 1e-9);
    }

    #[test]
    fn color_layout_half_black_half_white() {
        // Left half black, right half white; the block-average grid varies
        // only along columns.
        let img = RasterImage::from_fn(16, 16, |x, _| {
            if x < 8 {
                [0, 0, 0]
            } else {
                [255, 255, 255]
            }
        })
        .unwrap();
        let cl = color_layout(&img).unwrap();

        // Oracle: direct double-sum DCT on the block-average Y grid.
        let mut grid = [[0.0f64; 8]; 8];
        for (_, row) in grid.iter_mut().enumerate() {
            for (gx, v) in row.iter_mut().enumerate() {
                *v = if gx < 4 { 0.0 } else { 255.0 };
            }
        }
        let mut oracle = [[0.0f64; 8]; 8];
        for u in 0..8 {
            for v in 0..8 {
                let mut acc = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        acc += grid[y][x]
                            * ((2.0 * y as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0)
                                .cos()
                            * ((2.0 * x as f64 + 1.0) * v as f64 * std::f64::consts::PI / 16.0)
                                .cos();
                    }
                }
                let wu = if u == 0 { 1.0 / 8.0 } else { 2.0f64.sqrt() / 8.0 };
                let wv = if v == 0 { 1.0 / 8.0 } else { 2.0f64.sqrt() / 8.0 };
                oracle[u][v] = wu * wv * acc;
            }
        }
        let order = zigzag_order();
        for (k, (r, c)) in order.iter().enumerate() {
            assert!(
                (cl[k] - oracle[*r][*c]).abs() < 1e-9,
                "Y coefficient {k} ({r},{c})"
            );
        }
        // DC of Y equals the mid-gray of the block averages.
        assert!((cl[0] - 127.5).abs() < 1e-9);
        // Vertical-frequency terms (u != 0) of Y vanish.
        for (k, (r, _)) in order.iter().enumerate() {
            if *r != 0 {
                assert!(cl[k].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn color_structure_uniform_image_is_one_hot() {
        let img = uniform(12, 10, [200, 30, 30]);
        let cs = color_structure(&img).unwrap();
        assert_eq!(cs.len(), 256);
        let ones: Vec<usize> = cs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones.len(), 1);
        assert_eq!(cs[ones[0]], 1.0);
    }

    #[test]
    fn color_structure_two_color_matches_window_scan_oracle() {
        // 16x8: left 8 columns one color, right 8 another.
        let ca = [250, 10, 10];
        let cb = [10, 10, 250];
        let img = RasterImage::from_fn(16, 8, |x, _| if x < 8 { ca } else { cb }).unwrap();
        let cs = color_structure(&img).unwrap();

        // Brute-force oracle: walk all window positions, collect presence.
        let bin_a = quantize_hsv_256(ca[0], ca[1], ca[2]);
        let bin_b = quantize_hsv_256(cb[0], cb[1], cb[2]);
        let mut count_a = 0.0;
        let mut count_b = 0.0;
        let positions = 9; // (16-7) x (8-7) window positions
        for x0 in 0..16 - 7 {
            let has_a = x0 < 8; // window columns x0..x0+8 intersect [0,8)
            let has_b = x0 + 8 > 8;
            if has_a {
                count_a += 1.0;
            }
            if has_b {
                count_b += 1.0;
            }
        }
        assert_eq!(cs[bin_a], count_a / positions as f64);
        assert_eq!(cs[bin_b], count_b / positions as f64);
        assert!(cs[bin_a] > 0.0 && cs[bin_a] <= 1.0);
        assert!(cs[bin_b] > 0.0 && cs[bin_b] <= 1.0);
        let sum: f64 = cs.iter().sum();
        assert!(sum >= 1.0);
    }

    #[test]
    fn edge_histogram_uniform_image_is_zero() {
        let img = uniform(32, 32, [77, 77, 77]);
        let eh = edge_histogram(&img).unwrap();
        assert_eq!(eh.len(), 80);
        assert!(eh.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn edge_histogram_vertical_stripes_hit_vertical_bin() {
        // Width-3 stripes so that half the boundaries fall inside 2x2
        // macro-blocks.
        let img = RasterImage::from_fn(32, 32, |x, _| {
            if (x / 3) % 2 == 0 {
                [0, 0, 0]
            } else {
                [255, 255, 255]
            }
        })
        .unwrap();
        let eh = edge_histogram(&img).unwrap();
        // Oracle: classify macro-blocks directly.
        let lum = img.luminance();
        let mut oracle = vec![0.0f64; 80];
        for si in 0..4 {
            for sj in 0..4 {
                let (y0, y1) = (si * 32 / 4, (si + 1) * 32 / 4);
                let (x0, x1) = (sj * 32 / 4, (sj + 1) * 32 / 4);
                let mut blocks = 0;
                let mut hist = [0.0f64; 5];
                for by in (y0..y1 - 1).step_by(2) {
                    for bx in (x0..x1 - 1).step_by(2) {
                        let a = lum[by * 32 + bx];
                        let b = lum[by * 32 + bx + 1];
                        let c = lum[(by + 1) * 32 + bx];
                        let d = lum[(by + 1) * 32 + bx + 1];
                        let resp = [
                            (a - b + c - d).abs(),
                            (a + b - c - d).abs(),
                            (2.0f64.sqrt() * (a - d)).abs(),
                            (2.0f64.sqrt() * (b - c)).abs(),
                            (2.0 * a - 2.0 * b - 2.0 * c + 2.0 * d).abs(),
                        ];
                        let mut best = 0;
                        for i in 1..5 {
                            if resp[i] > resp[best] {
                                best = i;
                            }
                        }
                        if resp[best] > DEFAULT_EDGE_THRESHOLD {
                            hist[best] += 1.0;
                        }
                        blocks += 1;
                    }
                }
                for (k, v) in hist.iter().enumerate() {
                    oracle[(si * 4 + sj) * 5 + k] = v / blocks as f64;
                }
            }
        }
        assert_eq!(eh, oracle);
        // Every sub-image contains at least one detected boundary, and all
        // detected mass sits in the vertical bin.
        for s in 0..16 {
            let local = &eh[s * 5..s * 5 + 5];
            assert!(local[0] > 0.0, "sub-image {s} vertical bin empty");
            for k in 1..5 {
                assert_eq!(local[k], 0.0, "sub-image {s} bin {k}");
            }
        }
    }

    #[test]
    fn edge_histogram_values_in_unit_interval() {
        let img = RasterImage::from_fn(20, 24, |x, y| {
            [(x * 13 % 256) as u8, (y * 7 % 256) as u8, ((x + y) % 256) as u8]
        })
        .unwrap();
        let eh = edge_histogram(&img).unwrap();
        assert!(eh.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn scalable_color_uniform_matches_haar_of_one_hot() {
        let rgb = [30, 220, 100];
        let img = uniform(10, 9, rgb);
        let sc = scalable_color(&img).unwrap();
        assert_eq!(sc.len(), 256);

        // Oracle: closed-form Haar transform of a one-hot input. The
        // cascade's coefficient at level l (detail block starting at 2^l,
        // support 256 / 2^(l+1) per coefficient) is +1 if the hot index sits
        // in the first half of its support, -1 in the second half, 0 outside.
        let hot = quantize_hsv_256(rgb[0], rgb[1], rgb[2]);
        let mut expected = vec![0.0f64; 256];
        expected[0] = 1.0;
        let mut support = 256usize;
        let mut block = 1usize;
        while support > 1 {
            let coeff = block + hot / support; // which detail coefficient covers `hot`
            let within = hot % support;
            expected[coeff] = if within < support / 2 { 1.0 } else { -1.0 };
            block *= 2;
            support /= 2;
        }
        for k in 0..256 {
            assert!(
                (sc[k] - expected[k]).abs() < 1e-12,
                "coefficient {k}: {} vs {}",
                sc[k],
                expected[k]
            );
        }
        // DC (global sum path) equals the histogram total.
        assert!((sc[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mpeg7_concatenation_is_784() {
        let img = uniform(16, 16, [1, 2, 3]);
        assert_eq!(mpeg7_descriptor(&img).unwrap().len(), 784);
    }

    #[test]
    fn descriptors_are_deterministic_and_flip_stable() {
        let img = RasterImage::from_fn(24, 16, |x, y| {
            [(x * y % 256) as u8, (x * 3 % 256) as u8, (y * 5 % 256) as u8]
        })
        .unwrap();
        let twice_flipped = img.flip_rows().flip_rows();
        assert_eq!(
            mpeg7_descriptor(&img).unwrap(),
            mpeg7_descriptor(&twice_flipped).unwrap()
        );
        assert_eq!(
            mpeg7_descriptor(&img).unwrap(),
            mpeg7_descriptor(&img).unwrap()
        );
    }
}
