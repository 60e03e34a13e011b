use std::fmt::Write as _;
use std::path::Path;

use super::{ModelError, Result};

pub const PATCH_SIZES: [usize; 3] = [8, 16, 32];

/// Architecture and loss settings. Everything except `lambda` determines the
/// parameter layout, so a checkpoint is only valid for a matching config.
#[derive(Debug, Clone, PartialEq)]
pub struct SignConfig {
    pub image_height: usize,
    pub image_width: usize,
    /// 1 for grayscale, 3 for RGB; inputs are converted on the way in.
    pub channels: usize,
    pub patch_size: usize,
    /// Feature width K of the patch and gist encoders.
    pub feature_dim: usize,
    pub cnn_channels: usize,
    pub gist_size: usize,
    pub gist_sigma: f64,
    pub depth: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    /// Hidden width of the three scalar heads (gist, local gaze, weight).
    pub head_hidden: usize,
    pub positional: bool,
    pub context_enabled: bool,
    pub lambda: f64,
}

impl Default for SignConfig {
    fn default() -> Self {
        Self {
            image_height: 128,
            image_width: 128,
            channels: 1,
            patch_size: 16,
            feature_dim: 32,
            cnn_channels: 8,
            gist_size: 32,
            gist_sigma: 8.0,
            depth: 2,
            heads: 4,
            mlp_hidden: 64,
            head_hidden: 32,
            positional: true,
            context_enabled: false,
            lambda: 0.0,
        }
    }
}

impl SignConfig {
    pub fn grid(&self) -> (usize, usize) {
        (self.image_height / self.patch_size, self.image_width / self.patch_size)
    }

    pub fn regions(&self) -> usize {
        let (r, c) = self.grid();
        r * c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if !PATCH_SIZES.contains(&self.patch_size) {
            return bad(format!("patch_size {} not in {PATCH_SIZES:?}", self.patch_size));
        }
        if self.image_height == 0
            || self.image_width == 0
            || !self.image_height.is_multiple_of(self.patch_size)
            || !self.image_width.is_multiple_of(self.patch_size)
        {
            return bad(format!(
                "image {}x{} not divisible into {}px patches",
                self.image_height, self.image_width, self.patch_size
            ));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.gist_size < 8 {
            return bad(format!("gist_size must be >= 8, got {}", self.gist_size));
        }
        if !(self.gist_sigma >= 0.0 && self.gist_sigma.is_finite()) {
            return bad(format!("gist_sigma must be finite and >= 0, got {}", self.gist_sigma));
        }
        if self.heads == 0 || self.feature_dim == 0 || !self.feature_dim.is_multiple_of(self.heads) {
            return bad(format!("feature_dim {} must split across {} heads", self.feature_dim, self.heads));
        }
        if self.cnn_channels == 0 || self.mlp_hidden == 0 || self.head_hidden == 0 {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }

    /// `key = value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k} = {v}").expect("write to String");
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("image_height", self.image_height.to_string()),
            ("image_width", self.image_width.to_string()),
            ("channels", self.channels.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("cnn_channels", self.cnn_channels.to_string()),
            ("gist_size", self.gist_size.to_string()),
            ("gist_sigma", format!("{:?}", self.gist_sigma)),
            ("depth", self.depth.to_string()),
            ("heads", self.heads.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("head_hidden", self.head_hidden.to_string()),
            ("positional", self.positional.to_string()),
            ("context_enabled", self.context_enabled.to_string()),
            ("lambda", format!("{:?}", self.lambda)),
        ]
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped; unknown keys are errors.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ModelError::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|m| ModelError::InvalidConfig(format!("line {}: {m}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "image_height" => self.image_height = parse(key, value)?,
            "image_width" => self.image_width = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "cnn_channels" => self.cnn_channels = parse(key, value)?,
            "gist_size" => self.gist_size = parse(key, value)?,
            "gist_sigma" => self.gist_sigma = parse(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse(key, value)?,
            "head_hidden" => self.head_hidden = parse(key, value)?,
            "positional" => self.positional = parse(key, value)?,
            "context_enabled" => self.context_enabled = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_kv(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_kv()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = SignConfig {
            patch_size: 8,
            lambda: 1e-3,
            gist_sigma: 2.5,
            context_enabled: true,
            ..Default::default()
        };
        assert_eq!(SignConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn kv_comments_and_errors() {
        let cfg = SignConfig::from_kv("# tuned\n\npatch_size = 32\n").unwrap();
        assert_eq!(cfg.patch_size, 32);
        assert!(SignConfig::from_kv("colour = red").is_err());
        assert!(SignConfig::from_kv("patch_size = big").is_err());
        assert!(SignConfig::from_kv("patch_size 8").is_err());
    }

    #[test]
    fn validation() {
        assert!(SignConfig::default().validate().is_ok());
        for bad in [
            SignConfig { patch_size: 12, ..Default::default() },
            SignConfig { lambda: -1.0, ..Default::default() },
            SignConfig { image_width: 100, ..Default::default() },
            SignConfig { heads: 3, ..Default::default() },
            SignConfig { channels: 2, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert_eq!(SignConfig::default().regions(), 64);
    }
}
