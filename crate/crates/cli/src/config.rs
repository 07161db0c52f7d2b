//! `key = value` run configuration. Lines starting with `#` are comments.
//! Command-line flags are applied on top of the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::exit::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Explicit noise levels. When empty, each command uses its own default.
    pub sigma: Vec<f64>,
    /// Evaluate on every level from 0.1 to 1.0 instead of the default pair.
    pub sigma_grid: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub channels: usize,
    pub use_bn: bool,
    pub hidden: usize,
    pub window: usize,
    pub noise_var: Option<f64>,
    /// Held-out images for untagged manifests; defaults to 5% rounded up.
    pub test_count: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma: Vec::new(),
            sigma_grid: false,
            epochs: 1000,
            batch_size: 10,
            learning_rate: 1e-3,
            channels: despeckle::model::DEFAULT_WIDTH,
            use_bn: true,
            hidden: despeckle::model::DEFAULT_HIDDEN,
            window: despeckle::baseline::DEFAULT_WINDOW,
            noise_var: None,
            test_count: None,
            manifest: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Failure> {
    value
        .parse()
        .map_err(|_| Failure::usage(format!("config key {key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, Failure> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Failure::usage(format!("config key {key}: expected a boolean, got '{value}'"))),
    }
}

pub fn parse_sigmas(value: &str) -> Result<Vec<f64>, Failure> {
    value
        .split(',')
        .map(|s| parse::<f64>("sigma", s.trim()))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "sigma" => self.sigma = parse_sigmas(value)?,
            "sigma_grid" => self.sigma_grid = parse_bool(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "use_bn" => self.use_bn = parse_bool(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "noise_var" => self.noise_var = Some(parse(key, value)?),
            "test_count" => self.test_count = Some(parse(key, value)?),
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Failure::usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self, Failure> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("config line {}: expected key = value", i + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    pub fn test_count_for(&self, images: usize) -> usize {
        self.test_count.unwrap_or_else(|| images.div_ceil(20))
    }

    /// Every effective value, one `key = value` per line, in the file syntax.
    pub fn render(&self) -> String {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        if !self.sigma.is_empty() {
            let _ = writeln!(s, "sigma = {}", list(&self.sigma));
        }
        let _ = writeln!(s, "sigma_grid = {}", self.sigma_grid);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "channels = {}", self.channels);
        let _ = writeln!(s, "use_bn = {}", self.use_bn);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "window = {}", self.window);
        if let Some(v) = self.noise_var {
            let _ = writeln!(s, "noise_var = {v}");
        }
        if let Some(n) = self.test_count {
            let _ = writeln!(s, "test_count = {n}");
        }
        if let Some(m) = &self.manifest {
            let _ = writeln!(s, "manifest = {}", m.display());
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_are_read() {
        let c = RunConfig::parse_text("# run\nseed = 7\nsigma = 0.1, 0.5\nuse_bn = false\n\nnoise_var=0.04\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.sigma, vec![0.1, 0.5]);
        assert!(!c.use_bn);
        assert_eq!(c.noise_var, Some(0.04));
        assert_eq!(c.epochs, 1000);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse_text("sigmas = 0.1").unwrap_err();
        assert_eq!(err.code, 2);
    }

    #[test]
    fn render_parses_back() {
        let mut c = RunConfig::default();
        c.sigma = vec![0.3, 1.0];
        c.test_count = Some(4);
        c.manifest = Some("data/m.txt".into());
        assert_eq!(RunConfig::parse_text(&c.render()).unwrap(), c);
    }

    #[test]
    fn default_test_count_rounds_up() {
        let c = RunConfig::default();
        assert_eq!(c.test_count_for(40), 2);
        assert_eq!(c.test_count_for(8), 1);
        assert_eq!(c.test_count_for(1000), 50);
    }
}
