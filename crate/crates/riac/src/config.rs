//! Flat key=value run configuration with documented defaults.
//!
//! One namespace covers every pipeline decision; files hold `key = value`
//! lines (`#` comments allowed) and the command line may override any key
//! with `--key value`. Unknown keys are rejected so typos fail loudly.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Every known key with its default and one-line documentation.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset", "utkinect", "dataset name: utkinect, florence, msr, synthetic"),
    ("protocol", "loocv-sequence", "split protocol: loocv-sequence, loocv-subject, cross-subject"),
    ("msr_layout", "world20", "MSR skeleton file layout: world20 or screenworld40"),
    ("image_size", "224", "CASS render size (square, multiple of 4)"),
    ("margin", "0.10", "CASS bounding-box margin fraction"),
    ("line_width", "1", "CASS trajectory stroke width in pixels"),
    ("augment", "full", "train-side augmentation menu: full or none"),
    ("frames", "60", "temporal resampling target length"),
    ("branch_channels", "64", "STCF per-branch channel count"),
    ("hidden", "128", "LSTM hidden size"),
    ("former", "spatial-rows", "sequence former: spatial-rows or single-step"),
    ("dropout", "0.2", "dropout probability before the dense layer"),
    ("batch_size", "256", "training mini-batch size"),
    ("lr", "0.001", "initial Adam learning rate"),
    ("lr_multiplier", "0.98", "learning-rate decay factor (0.02 selects the literal reading)"),
    ("lr_every", "20", "epochs between learning-rate decays"),
    ("max_epochs", "1000", "training epoch cap"),
    ("patience", "50", "early-stopping patience in epochs on validation loss"),
    ("weight_noise", "0.01", "Gaussian weight-noise sigma applied each step"),
    ("val_fraction", "0.1", "stratified validation slice taken from the train fold"),
    ("bn_freeze_epoch", "10", "warm-up epochs before BN running stats freeze and drive training"),
    ("fusion_mode", "test", "weight-search target: test (paper-literal) or validation"),
    ("seed", "42", "base seed; all per-(part,fold) seeds derive from it"),
    ("out_dir", "out", "output root directory"),
    ("jobs", "0", "worker cap; 0 means the rayon default"),
];

/// Fully resolved configuration: defaults overlaid with file and CLI
/// overrides, in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect();
        RunConfig { values }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.values.contains_key(key) {
            return Err(Error::InvalidArgument(format!(
                "unknown configuration key {key:?}; run with --help-config for the key list"
            )));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unknown key {key}"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get(key)
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{key} must be a non-negative integer, got {:?}", self.get(key))))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.get(key)
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{key} must be a number, got {:?}", self.get(key))))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        self.get(key)
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{key} must be a non-negative integer, got {:?}", self.get(key))))
    }

    /// Loads a `key = value` file over the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, lineno + 1, "expected `key = value`")
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Applies `--key value` pairs collected from the command line.
    pub fn apply_overrides(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// The resolved configuration as a reloadable key=value document.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.resolved.txt");
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }

    /// Human-readable key documentation for `--help-config`.
    pub fn describe_keys() -> String {
        let mut s = String::new();
        for (k, d, doc) in KEYS {
            s.push_str(&format!("{k:<16} (default {d:<12}) {doc}\n"));
        }
        s
    }
}
