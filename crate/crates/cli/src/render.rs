use image::{Rgb, RgbImage};
use nws_core::dsp::Rainbowgram;

/// Dynamic range shown, in dB below the loudest bin.
const RANGE_DB: f64 = 80.0;

/// Time runs left to right and frequency bottom to top. Lightness follows
/// log magnitude; hue follows how far the instantaneous frequency sits
/// from the bin centre, one full turn per bin spacing.
pub fn rainbowgram_image(rg: &Rainbowgram) -> RgbImage {
    let peak = rg.magnitude.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    let peak_db = 20.0 * peak.max(1e-12).log10();
    let spacing = rg.bin_hz(1);
    let mut img = RgbImage::new(rg.frames.max(1) as u32, rg.bins.max(1) as u32);
    for t in 0..rg.frames {
        for k in 0..rg.bins {
            let db = 20.0 * (rg.magnitude_at(t, k) as f64).max(1e-12).log10();
            let light = ((db - peak_db + RANGE_DB) / RANGE_DB).clamp(0.0, 1.0) * 0.5;
            let dev = (rg.inst_freq_at(t, k) as f64 - rg.bin_hz(k)) / spacing;
            let hue = (dev + 0.5).rem_euclid(1.0);
            let y = (rg.bins - 1 - k) as u32;
            img.put_pixel(t as u32, y, hsl_to_rgb(hue, 1.0, light));
        }
    }
    img
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> Rgb<u8> {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h * 6.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([byte(r), byte(g), byte(b)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsl_primaries() {
        assert_eq!(hsl_to_rgb(0.0, 1.0, 0.5), Rgb([255, 0, 0]));
        assert_eq!(hsl_to_rgb(1.0 / 3.0, 1.0, 0.5), Rgb([0, 255, 0]));
        assert_eq!(hsl_to_rgb(2.0 / 3.0, 1.0, 0.5), Rgb([0, 0, 255]));
        assert_eq!(hsl_to_rgb(0.3, 1.0, 0.0), Rgb([0, 0, 0]));
    }
}
