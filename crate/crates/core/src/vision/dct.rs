//! 8x8 2-D DCT-II and the JPEG zigzag scan used by the color layout
//! descriptor. The scaling is chosen so that coefficient (0,0) equals the
//! block mean.

// Index loops here mirror the transform's double sums.
#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

/// Weight per frequency index: w(0) = 1/8, w(k>0) = sqrt(2)/8, making the
/// DC term the mean of the 64 samples.
fn weight(u: usize) -> f64 {
    if u == 0 {
        1.0 / 8.0
    } else {
        std::f64::consts::SQRT_2 / 8.0
    }
}

/// Separable 2-D DCT of one 8x8 block, indexed [row][col].
pub fn dct2_8x8(block: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut cos = [[0.0f64; 8]; 8];
    for u in 0..8 {
        for x in 0..8 {
            cos[u][x] = ((2.0 * x as f64 + 1.0) * u as f64 * PI / 16.0).cos();
        }
    }
    // Rows first: tmp[y][v] = sum_x f(y,x) cos_v(x)
    let mut tmp = [[0.0f64; 8]; 8];
    for y in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += block[y][x] * cos[v][x];
            }
            tmp[y][v] = acc;
        }
    }
    let mut out = [[0.0f64; 8]; 8];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += tmp[y][v] * cos[u][y];
            }
            out[u][v] = weight(u) * weight(v) * acc;
        }
    }
    out
}

/// The standard JPEG zigzag traversal of an 8x8 grid as (row, col) pairs.
pub fn zigzag_order() -> [(usize, usize); 64] {
    let mut order = [(0usize, 0usize); 64];
    let (mut r, mut c) = (0usize, 0usize);
    let mut up = true;
    for slot in order.iter_mut() {
        *slot = (r, c);
        if up {
            if c == 7 {
                r += 1;
                up = false;
            } else if r == 0 {
                c += 1;
                up = false;
            } else {
                r -= 1;
                c += 1;
            }
        } else if r == 7 {
            c += 1;
            up = true;
        } else if c == 0 {
            r += 1;
            up = true;
        } else {
            r += 1;
            c -= 1;
        }
    }
    order
}
