//! 10-bit μ-law companding for the autoregressive model's categorical
//! output.

use super::DspError;

pub const QUANT_LEVELS: u32 = 1024;
pub const MU: f64 = (QUANT_LEVELS - 1) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuLawCodec {
    pub bits: u32,
    pub mu: f64,
}

impl Default for MuLawCodec {
    fn default() -> Self {
        Self { bits: 10, mu: MU }
    }
}

impl MuLawCodec {
    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn encode(&self, amplitude: f64) -> u32 {
        let f = compand(amplitude.clamp(-1.0, 1.0), self.mu);
        let levels = self.levels();
        (((f + 1.0) / 2.0 * levels as f64).floor() as u32).min(levels - 1)
    }

    /// Expands the centre of the code's cell back to an amplitude.
    pub fn decode(&self, code: u32) -> Result<f64, DspError> {
        let levels = self.levels();
        if code >= levels {
            return Err(DspError::CodeOutOfRange(code));
        }
        let f = (code as f64 + 0.5) / levels as f64 * 2.0 - 1.0;
        Ok(expand(f, self.mu))
    }
}

fn compand(x: f64, mu: f64) -> f64 {
    x.signum() * (1.0 + mu * x.abs()).ln() / (1.0 + mu).ln()
}

fn expand(f: f64, mu: f64) -> f64 {
    f.signum() * ((1.0 + mu).powf(f.abs()) - 1.0) / mu
}

/// `sign(x) · ln(1 + 1023|x|) / ln(1024)`, before quantization.
pub fn mu_law_compand(amplitude: f64) -> f64 {
    compand(amplitude.clamp(-1.0, 1.0), MU)
}

pub fn mu_law_encode(amplitude: f64) -> u32 {
    MuLawCodec::default().encode(amplitude)
}

pub fn mu_law_decode(code: u32) -> Result<f64, DspError> {
    MuLawCodec::default().decode(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_codes() {
        assert_eq!(mu_law_encode(0.0), 512);
        assert_eq!(mu_law_encode(1.0), 1023);
        assert_eq!(mu_law_encode(-1.0), 0);
        assert_eq!(mu_law_encode(7.0), 1023);
        assert!((mu_law_compand(0.1) - 103.3f64.ln() / 1024f64.ln()).abs() < 1e-12);
        assert!((mu_law_compand(0.1) - 0.6691).abs() < 1e-4);
        assert!(mu_law_decode(encode_zero()).unwrap().abs() < 1e-3);
        assert!(matches!(mu_law_decode(1024), Err(DspError::CodeOutOfRange(1024))));
    }

    fn encode_zero() -> u32 {
        mu_law_encode(0.0)
    }

    #[test]
    fn decode_stays_in_range() {
        for c in 0..1024 {
            let x = mu_law_decode(c).unwrap();
            assert!((-1.0..=1.0).contains(&x));
            assert_eq!(mu_law_encode(x), c);
        }
    }
}
