//! Plain-text `key=value` configuration mirroring the library's
//! runtime defaults.
//!
//! Grammar: one `key=value` pair per line; blank lines and lines whose
//! first non-space character is `#` are ignored; the first `=` splits
//! key from value and both sides are trimmed. Unknown keys are errors —
//! a typo must never silently fall back to a default. When a key is
//! repeated the last occurrence wins, so a base file can be extended by
//! appending overrides.

use std::fmt::Write as _;

use crate::bev::GridSpec;
use crate::error::{Error, Result};
use crate::extract::ExtractConfig;
use crate::net::{Head, NetSpec};
use crate::train::TrainConfig;

/// Effective settings for the whole pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub grid: GridSpec,
    /// Stack depth: input frames kept and future frames predicted.
    pub d: usize,
    /// Frame spacing in seconds; horizon k covers (k+1)·dt_s.
    pub dt_s: f64,
    pub net_depth: usize,
    pub net_base_features: usize,
    pub net_head: Head,
    pub train: TrainConfig,
    pub extract: ExtractConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            grid: GridSpec::default(),
            d: 15,
            dt_s: 0.2,
            net_depth: 5,
            net_base_features: 4,
            net_head: Head::Linear,
            train: TrainConfig::default(),
            extract: ExtractConfig::default(),
        }
    }
}

/// Every recognized key, in the order `render` emits them.
pub const CONFIG_KEYS: [&str; 17] = [
    "grid.width",
    "grid.height",
    "grid.x_m_per_px",
    "grid.y_m_per_px",
    "stack.d",
    "stack.dt_s",
    "net.depth",
    "net.base_features",
    "net.head",
    "train.lr",
    "train.momentum",
    "train.clip",
    "train.epochs",
    "train.seed",
    "extract.p_min",
    "extract.win_w",
    "extract.win_h",
];

impl Config {
    /// Parse a config file's text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim(), line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key/value pair; `line` is reported in errors.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| Error::Parse {
                line,
                msg: format!("{key}: {e} (value {value:?})"),
            })
        }
        match key {
            "grid.width" => self.grid.width_px = num(key, value, line)?,
            "grid.height" => self.grid.height_px = num(key, value, line)?,
            "grid.x_m_per_px" => self.grid.x_m_per_px = num(key, value, line)?,
            "grid.y_m_per_px" => self.grid.y_m_per_px = num(key, value, line)?,
            "stack.d" => self.d = num(key, value, line)?,
            "stack.dt_s" => self.dt_s = num(key, value, line)?,
            "net.depth" => self.net_depth = num(key, value, line)?,
            "net.base_features" => self.net_base_features = num(key, value, line)?,
            "net.head" => {
                self.net_head = value.parse().map_err(|e: Error| Error::Parse {
                    line,
                    msg: e.to_string(),
                })?
            }
            "train.lr" => self.train.lr = num(key, value, line)?,
            "train.momentum" => self.train.momentum = num(key, value, line)?,
            "train.clip" => self.train.clip = num(key, value, line)?,
            "train.epochs" => self.train.epochs = num(key, value, line)?,
            "train.seed" => self.train.seed = num(key, value, line)?,
            "extract.p_min" => self.extract.p_min = num(key, value, line)?,
            "extract.win_w" => self.extract.win_w = num(key, value, line)?,
            "extract.win_h" => self.extract.win_h = num(key, value, line)?,
            _ => {
                return Err(Error::UnknownKey {
                    key: key.to_string(),
                    line,
                })
            }
        }
        Ok(())
    }

    /// Render every key; `parse_str(render())` reproduces the config
    /// exactly (float formatting round-trips bit-for-bit).
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "grid.width={}", self.grid.width_px);
        let _ = writeln!(out, "grid.height={}", self.grid.height_px);
        let _ = writeln!(out, "grid.x_m_per_px={}", self.grid.x_m_per_px);
        let _ = writeln!(out, "grid.y_m_per_px={}", self.grid.y_m_per_px);
        let _ = writeln!(out, "stack.d={}", self.d);
        let _ = writeln!(out, "stack.dt_s={}", self.dt_s);
        let _ = writeln!(out, "net.depth={}", self.net_depth);
        let _ = writeln!(out, "net.base_features={}", self.net_base_features);
        let _ = writeln!(out, "net.head={}", self.net_head);
        let _ = writeln!(out, "train.lr={}", self.train.lr);
        let _ = writeln!(out, "train.momentum={}", self.train.momentum);
        let _ = writeln!(out, "train.clip={}", self.train.clip);
        let _ = writeln!(out, "train.epochs={}", self.train.epochs);
        let _ = writeln!(out, "train.seed={}", self.train.seed);
        let _ = writeln!(out, "extract.p_min={}", self.extract.p_min);
        let _ = writeln!(out, "extract.win_w={}", self.extract.win_w);
        let _ = writeln!(out, "extract.win_h={}", self.extract.win_h);
        out
    }

    /// The network architecture this config describes: a d-in, d-out
    /// image-to-image net.
    pub fn net_spec(&self) -> NetSpec {
        NetSpec {
            depth: self.net_depth,
            base_features: self.net_base_features,
            in_channels: self.d,
            out_channels: self.d,
            head: self.net_head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.width_px == 0 || self.grid.height_px == 0 {
            return Err(Error::InvalidArgument(
                "grid dimensions must be positive".into(),
            ));
        }
        if !(self.grid.x_m_per_px > 0.0 && self.grid.x_m_per_px.is_finite())
            || !(self.grid.y_m_per_px > 0.0 && self.grid.y_m_per_px.is_finite())
        {
            return Err(Error::InvalidArgument(
                "grid resolution must be positive and finite".into(),
            ));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("stack.d must be >= 1".into()));
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::InvalidArgument(
                "stack.dt_s must be positive and finite".into(),
            ));
        }
        self.net_spec().validate()?;
        self.train.validate()?;
        self.extract.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = Config::default();
        assert_eq!(c.grid.width_px, 512);
        assert_eq!(c.grid.height_px, 64);
        assert_eq!(c.grid.x_m_per_px, 1.0);
        assert_eq!(c.grid.y_m_per_px, 0.5);
        assert_eq!(c.d, 15);
        assert_eq!(c.dt_s, 0.2);
        assert_eq!(c.net_depth, 5);
        assert_eq!(c.net_base_features, 4);
        assert_eq!(c.net_head, Head::Linear);
        assert_eq!(c.train.lr, 1e-6);
        assert_eq!(c.train.momentum, 0.9);
        assert_eq!(c.train.clip, 1.0);
        assert_eq!(c.train.epochs, 1);
        assert_eq!(c.train.seed, 0);
        assert_eq!(c.extract.p_min, 0.5);
        assert_eq!(c.extract.win_w, 5.0);
        assert_eq!(c.extract.win_h, 2.0);
    }

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn render_parse_round_trip_is_identity() {
        let c = Config::default();
        assert_eq!(Config::parse_str(&c.render()).unwrap(), c);

        let mut m = Config::default();
        m.grid.width_px = 128;
        m.grid.height_px = 16;
        m.grid.x_m_per_px = 0.25;
        m.grid.y_m_per_px = 0.125;
        m.d = 8;
        m.dt_s = 0.1;
        m.net_depth = 4;
        m.net_base_features = 8;
        m.net_head = Head::ClippedRelu;
        m.train.lr = 0.05;
        m.train.momentum = 0.85;
        m.train.clip = 0.0;
        m.train.epochs = 3;
        m.train.seed = 99;
        m.extract.p_min = 0.3;
        m.extract.win_w = 6.5;
        m.extract.win_h = 1.5;
        assert_eq!(Config::parse_str(&m.render()).unwrap(), m);
    }

    #[test]
    fn render_emits_every_key_once() {
        let text = Config::default().render();
        for key in CONFIG_KEYS {
            let hits = text
                .lines()
                .filter(|l| l.starts_with(&format!("{key}=")))
                .count();
            assert_eq!(hits, 1, "{key}");
        }
        assert_eq!(text.lines().count(), CONFIG_KEYS.len());
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let text = "grid.width=64\n\n# comment\ngrid.widht=32\n";
        match Config::parse_str(text) {
            Err(Error::UnknownKey { key, line }) => {
                assert_eq!(key, "grid.widht");
                assert_eq!(line, 4);
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "# leading comment\n\n  grid.width = 128  \n\tstack.d=8\n";
        let c = Config::parse_str(text).unwrap();
        assert_eq!(c.grid.width_px, 128);
        assert_eq!(c.d, 8);
        // Untouched keys keep their defaults.
        assert_eq!(c.grid.height_px, 64);
    }

    #[test]
    fn bad_value_reports_its_line() {
        match Config::parse_str("stack.d=eight\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("stack.d"), "{msg}");
            }
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn missing_equals_is_a_parse_error() {
        assert!(matches!(
            Config::parse_str("grid.width 64\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn last_duplicate_wins() {
        let c = Config::parse_str("net.depth=3\nnet.depth=6\n").unwrap();
        assert_eq!(c.net_depth, 6);
    }

    #[test]
    fn head_values_parse_and_bad_head_errors() {
        assert_eq!(
            Config::parse_str("net.head=tanh\n").unwrap().net_head,
            Head::Tanh
        );
        assert_eq!(
            Config::parse_str("net.head=clipped_relu\n").unwrap().net_head,
            Head::ClippedRelu
        );
        assert!(matches!(
            Config::parse_str("net.head=sigmoid\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn parse_validates_the_merged_config() {
        // Each line is individually well-formed; the whole is invalid.
        assert!(Config::parse_str("net.depth=0\n").is_err());
        assert!(Config::parse_str("extract.p_min=1.5\n").is_err());
        assert!(Config::parse_str("train.lr=-0.5\n").is_err());
        assert!(Config::parse_str("grid.x_m_per_px=0\n").is_err());
    }

    #[test]
    fn set_rejects_unknown_keys_for_flag_overrides_too() {
        let mut c = Config::default();
        assert!(matches!(
            c.set("grid.diag", "1", 0),
            Err(Error::UnknownKey { .. })
        ));
        c.set("train.seed", "7", 0).unwrap();
        assert_eq!(c.train.seed, 7);
    }

    proptest! {
        /// Any valid config survives render → parse bit-for-bit,
        /// including awkward float values.
        #[test]
        fn round_trip_holds_for_arbitrary_valid_configs(
            width in 1usize..2048,
            height in 1usize..512,
            xres in 0.01f64..8.0,
            yres in 0.01f64..8.0,
            d in 1usize..32,
            dt in 0.01f64..2.0,
            depth in 1usize..7,
            k in 1usize..16,
            head_ix in 0usize..3,
            lr in 1e-6f64..1.0,
            mom in 0.0f64..0.999,
            clip in 0.0f64..100.0,
            epochs in 1usize..10,
            seed in 0u64..u64::MAX,
            p_min in 0.01f64..0.99,
            win_w in 0.5f64..20.0,
            win_h in 0.5f64..20.0,
        ) {
            let mut c = Config::default();
            c.grid.width_px = width;
            c.grid.height_px = height;
            c.grid.x_m_per_px = xres;
            c.grid.y_m_per_px = yres;
            c.d = d;
            c.dt_s = dt;
            c.net_depth = depth;
            c.net_base_features = k;
            c.net_head = [Head::Linear, Head::Tanh, Head::ClippedRelu][head_ix];
            c.train.lr = lr;
            c.train.momentum = mom;
            c.train.clip = clip;
            c.train.epochs = epochs;
            c.train.seed = seed;
            c.extract.p_min = p_min;
            c.extract.win_w = win_w;
            c.extract.win_h = win_h;
            prop_assert_eq!(Config::parse_str(&c.render()).unwrap(), c);
        }
    }
}
