use std::fmt;
use std::str::FromStr;

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileName {
    /// 24 kHz, 5 ms shift; used when training on music from scratch.
    TS,
    /// 22.05 kHz, 256-sample shift; shared with speech-pretrained models.
    FT,
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileName::TS => "TS",
            ProfileName::FT => "FT",
        })
    }
}

impl FromStr for ProfileName {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TS" => Ok(ProfileName::TS),
            "FT" => Ok(ProfileName::FT),
            _ => Err(DspError::UnknownProfile(s.to_string())),
        }
    }
}

/// Feature extraction settings bound to a sample rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureProfile {
    pub name: ProfileName,
    pub sample_rate: u32,
    pub hop: usize,
    pub fft_size: usize,
    pub win_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl FeatureProfile {
    pub const fn ts() -> Self {
        Self {
            name: ProfileName::TS,
            sample_rate: 24_000,
            hop: 120,
            fft_size: 1024,
            win_length: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: 12_000.0,
        }
    }

    pub const fn ft() -> Self {
        Self {
            name: ProfileName::FT,
            sample_rate: 22_050,
            hop: 256,
            fft_size: 1024,
            win_length: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8_000.0,
        }
    }

    pub fn by_name(name: ProfileName) -> Self {
        match name {
            ProfileName::TS => Self::ts(),
            ProfileName::FT => Self::ft(),
        }
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}
