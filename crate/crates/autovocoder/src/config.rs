//! Run configuration and its flat `key = value` text form.
//!
//! One text format serves both user config files and the snapshot embedded in
//! checkpoints: `#` starts a comment, blank lines are skipped, unknown keys
//! are errors, and serialization is canonical (fixed key order), so
//! `parse(to_text(c)) == c` and resaving a checkpoint reproduces its bytes.

use crate::dsp::mel::MelFilterbank;
use crate::dsp::{Head, PadMode, StftConfig, WindowKind};
use crate::error::{Error, Result};
use crate::losses::disc::DiscriminatorConfig;
use crate::losses::LossWeights;
use crate::model::ModelConfig;
use crate::scalar::Scalar;
use crate::trainer::adam::AdamConfig;

/// Log-mel analysis settings for the mel reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper band edge; `None` means the Nyquist frequency.
    pub f_max: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { n_mels: 80, f_min: 0.0, f_max: None }
    }
}

impl MelConfig {
    pub fn f_max_hz(&self, sample_rate: u32) -> f64 {
        self.f_max.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn build_filterbank<T: Scalar>(
        &self,
        stft: &StftConfig,
        sample_rate: u32,
    ) -> Result<MelFilterbank<T>> {
        MelFilterbank::new(
            self.n_mels,
            stft.freq_bins(),
            sample_rate,
            self.f_min,
            self.f_max_hz(sample_rate),
        )
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Training crop length in samples; crops start at hop-aligned offsets.
    pub segment_len: usize,
    pub lr: f64,
    pub lr_disc: f64,
    pub adam: AdamConfig,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            segment_len: 8192,
            lr: 2e-4,
            lr_disc: 2e-4,
            adam: AdamConfig::default(),
            lr_decay: 0.999,
            seed: 2024,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be nonzero"));
        }
        if self.segment_len == 0 {
            return Err(Error::invalid("segment_len must be nonzero"));
        }
        if !(self.lr > 0.0) || !(self.lr_disc > 0.0) {
            return Err(Error::invalid(format!(
                "learning rates must be positive: {} / {}",
                self.lr, self.lr_disc
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid(format!("lr_decay {} outside (0, 1]", self.lr_decay)));
        }
        self.adam.validate()?;
        self.weights.validate()
    }
}

/// Everything a training run needs, minus file paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub disc: DiscriminatorConfig,
    pub mel: MelConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.disc.validate()?;
        if self.mel.n_mels == 0 {
            return Err(Error::invalid("n_mels must be nonzero"));
        }
        // The filterbank constructor enforces edge ordering and coverage.
        self.mel.build_filterbank::<f64>(&self.model.stft, self.model.sample_rate)?;
        if self.train.segment_len < self.model.stft.window_size / 2 + 1 {
            return Err(Error::invalid(format!(
                "segment_len {} too short for reflect padding with window {}",
                self.train.segment_len, self.model.stft.window_size
            )));
        }
        Ok(())
    }

    /// Derive all component seeds from one master seed.
    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.disc.seed = seed.wrapping_add(1);
        self.train.seed = seed.wrapping_add(2);
        self
    }

    /// Canonical text form: fixed key order, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let d = &self.disc;
        let periods =
            d.periods.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
        let f_max = match self.mel.f_max {
            Some(v) => v.to_string(),
            None => "auto".into(),
        };
        let mut s = String::new();
        for (k, v) in [
            ("sample_rate", m.sample_rate.to_string()),
            ("window_size", m.stft.window_size.to_string()),
            ("hop", m.stft.hop.to_string()),
            ("window", m.stft.window.name().into()),
            ("pad", m.stft.pad.name().into()),
            ("head", m.head.name().into()),
            ("representation_dim", m.representation_dim.to_string()),
            ("embedding_dropout", m.embedding_dropout.to_string()),
            ("model_seed", m.seed.to_string()),
            ("n_mels", self.mel.n_mels.to_string()),
            ("mel_f_min", self.mel.f_min.to_string()),
            ("mel_f_max", f_max),
            ("batch_size", t.batch_size.to_string()),
            ("segment_len", t.segment_len.to_string()),
            ("lr", t.lr.to_string()),
            ("lr_disc", t.lr_disc.to_string()),
            ("beta1", t.adam.beta1.to_string()),
            ("beta2", t.adam.beta2.to_string()),
            ("adam_eps", t.adam.eps.to_string()),
            ("lr_decay", t.lr_decay.to_string()),
            ("train_seed", t.seed.to_string()),
            ("lambda_mel", t.weights.mel.to_string()),
            ("lambda_time", t.weights.time.to_string()),
            ("lambda_fm", t.weights.feature_match.to_string()),
            ("lambda_adv", t.weights.adversarial.to_string()),
            ("disc_periods", periods),
            ("disc_scales", d.scales.to_string()),
            ("disc_channel_cap", d.channel_cap.to_string()),
            ("disc_seed", d.seed.to_string()),
        ] {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Parse text over the defaults. Keys may appear in any order; every key
    /// is optional; unknown or repeated keys are errors.
    pub fn parse_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            cfg.apply(key, value).map_err(|e| {
                Error::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sample_rate" => self.model.sample_rate = parse_num(key, value)?,
            "window_size" => self.model.stft.window_size = parse_num(key, value)?,
            "hop" => self.model.stft.hop = parse_num(key, value)?,
            "window" => self.model.stft.window = WindowKind::parse(value)?,
            "pad" => self.model.stft.pad = PadMode::parse(value)?,
            "head" => self.model.head = Head::parse(value)?,
            "representation_dim" => self.model.representation_dim = parse_num(key, value)?,
            "embedding_dropout" => self.model.embedding_dropout = parse_num(key, value)?,
            "model_seed" => self.model.seed = parse_num(key, value)?,
            "n_mels" => self.mel.n_mels = parse_num(key, value)?,
            "mel_f_min" => self.mel.f_min = parse_num(key, value)?,
            "mel_f_max" => {
                self.mel.f_max =
                    if value == "auto" { None } else { Some(parse_num(key, value)?) }
            }
            "batch_size" => self.train.batch_size = parse_num(key, value)?,
            "segment_len" => self.train.segment_len = parse_num(key, value)?,
            "lr" => self.train.lr = parse_num(key, value)?,
            "lr_disc" => self.train.lr_disc = parse_num(key, value)?,
            "beta1" => self.train.adam.beta1 = parse_num(key, value)?,
            "beta2" => self.train.adam.beta2 = parse_num(key, value)?,
            "adam_eps" => self.train.adam.eps = parse_num(key, value)?,
            "lr_decay" => self.train.lr_decay = parse_num(key, value)?,
            "train_seed" => self.train.seed = parse_num(key, value)?,
            "lambda_mel" => self.train.weights.mel = parse_num(key, value)?,
            "lambda_time" => self.train.weights.time = parse_num(key, value)?,
            "lambda_fm" => self.train.weights.feature_match = parse_num(key, value)?,
            "lambda_adv" => self.train.weights.adversarial = parse_num(key, value)?,
            "disc_periods" => {
                self.disc.periods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_num("disc_periods", s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "disc_scales" => self.disc.scales = parse_num(key, value)?,
            "disc_channel_cap" => self.disc.channel_cap = parse_num(key, value)?,
            "disc_seed" => self.disc.seed = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }
}

fn parse_num<N: std::str::FromStr>(key: &str, value: &str) -> Result<N> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_lossless() {
        let mut cfg = RunConfig::default().with_master_seed(12345);
        cfg.model.representation_dim = 192;
        cfg.model.head = Head::Mean4;
        cfg.train.weights.adversarial = 0.0;
        cfg.mel.f_max = Some(8000.0);
        let text = cfg.to_text();
        let back = RunConfig::parse_text(&text).unwrap();
        assert_eq!(back, cfg);
        // Canonical form is a fixed point.
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn defaults_validate_and_match_published_settings() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.stft.window_size, 1024);
        assert_eq!(cfg.model.stft.hop, 256);
        assert_eq!(cfg.model.sample_rate, 22_050);
        assert_eq!(cfg.model.representation_dim, 128);
        assert_eq!(cfg.train.weights.mel, 45.0);
        assert_eq!(cfg.train.weights.time, 100.0);
        assert_eq!(cfg.train.adam.beta1, 0.8);
        assert_eq!(cfg.train.adam.beta2, 0.99);
        assert_eq!(cfg.disc.periods, vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn comments_blanks_and_partial_files_parse() {
        let text = "# trimmed run\n\nhop = 128  # tighter analysis\nrepresentation_dim = 64\n";
        let cfg = RunConfig::parse_text(text).unwrap();
        assert_eq!(cfg.model.stft.hop, 128);
        assert_eq!(cfg.model.representation_dim, 64);
        assert_eq!(cfg.model.stft.window_size, 1024, "unset keys stay default");
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_are_errors() {
        assert!(matches!(
            RunConfig::parse_text("windowsize = 5\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse_text("hop = 1\nhop = 2\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::parse_text("hop\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse_text("hop = abc\n"), Err(Error::Config(_))));
    }

    #[test]
    fn master_seed_fans_out() {
        let cfg = RunConfig::default().with_master_seed(7);
        assert_eq!(cfg.model.seed, 7);
        assert_eq!(cfg.disc.seed, 8);
        assert_eq!(cfg.train.seed, 9);
    }
}
