//! Color-space conversions and the 256-level HSV quantizer shared by the
//! color structure and scalable color descriptors.

/// Full-range BT.601 RGB -> YCbCr, inputs in [0, 255].
pub fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> [f64; 3] {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    let cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
    [y, cb, cr]
}

/// RGB (8-bit) -> HSV with H in [0, 360) and S, V in [0, 1].
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> [f64; 3] {
    let r = r as f64 / 255.0;
    let g = g as f64 / 255.0;
    let b = b as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h.rem_euclid(360.0), s, max]
}

/// Number of quantized color bins: 16 hue x 4 saturation x 4 value.
pub const HSV_BINS: usize = 256;

/// Maps a pixel into one of the 256 HSV bins.
pub fn quantize_hsv_256(r: u8, g: u8, b: u8) -> usize {
    let [h, s, v] = rgb_to_hsv(r, g, b);
    let hb = ((h / 360.0 * 16.0) as usize).min(15);
    let sb = ((s * 4.0) as usize).min(3);
    let vb = ((v * 4.0) as usize).min(3);
    hb * 16 + sb * 4 + vb
}
