//! Flat `key = value` experiment files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Every key any command understands.
pub const KNOWN_KEYS: &[&str] = &[
    // model
    "s0",
    "eta",
    "h",
    "rho",
    "rate",
    "t_horizon",
    "n_steps",
    "m_paths",
    "seed",
    "scheme",
    "soe_file",
    "curve_kind",
    "curve_scale",
    "curve_seed",
    "curve_h",
    // kernel
    "approach",
    "eps",
    "n_soe",
    "total_terms",
    "tau",
    "n_list",
    // pricing
    "schemes",
    "strikes",
    // training
    "batch_size",
    "epochs",
    "max_iterations",
    "lr",
    "lr_decay",
    "patience",
    "lr_floor",
    "train_fraction",
    "data_dir",
    "train_dir",
    // gradient check
    "grad_paths",
    "grad_trials",
    "fd_step",
    "grad_tol",
    // output
    "out_dir",
];

/// A configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Parsed file plus a record of every value a command resolved, defaults
/// included.
#[derive(Debug, Clone, Default)]
pub struct Config {
    raw: BTreeMap<String, String>,
    resolved: std::cell::RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str, known: &[&str]) -> Result<Self, ConfigError> {
        let mut raw = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`, got `{line}`", no + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            if !known.contains(&key) {
                return err(format!("unknown key `{key}` on line {}", no + 1));
            }
            if raw.insert(key.to_string(), value.to_string()).is_some() {
                return err(format!("key `{key}` given twice"));
            }
        }
        Ok(Self {
            raw,
            resolved: Default::default(),
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::Error::new(e).context(format!("reading config {}", path.display())))?;
        Ok(Self::parse(&text, KNOWN_KEYS)?)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.raw.insert(key.to_string(), value);
    }

    pub fn has(&self, key: &str) -> bool {
        self.raw.contains_key(key)
    }

    fn note(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn parse_value<T: FromStr>(key: &str, s: &str) -> Result<T, ConfigError> {
        s.parse()
            .map_err(|_| ConfigError(format!("key `{key}`: cannot parse `{s}`")))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        match self.raw.get(key) {
            Some(s) => {
                let v = Self::parse_value(key, s)?;
                self.note(key, s.clone());
                Ok(v)
            }
            None => err(format!("missing required key `{key}`")),
        }
    }

    pub fn get<T: FromStr + fmt::Debug>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw.get(key) {
            Some(s) => {
                let v = Self::parse_value(key, s)?;
                self.note(key, s.clone());
                Ok(v)
            }
            None => {
                self.note(key, format!("{default:?}").trim_matches('"').to_string());
                Ok(default)
            }
        }
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw.get(key) {
            Some(s) => {
                let v = Self::parse_value(key, s)?;
                self.note(key, s.clone());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        let v = self.raw.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.note(key, v.clone());
        v
    }

    pub fn optional_string(&self, key: &str) -> Option<String> {
        let v = self.raw.get(key).cloned();
        if let Some(s) = &v {
            self.note(key, s.clone());
        }
        v
    }

    /// `key = value` lines for every resolved key, sorted.
    pub fn resolved_text(&self, command: &str) -> String {
        let mut out = format!("# rough-vol-kit {command}\n");
        for (k, v) in self.resolved.borrow().iter() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Comma-separated list of numbers.
pub fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>, ConfigError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Config::parse_value(key, t))
        .collect()
}

/// Log-moneyness grid: `lo:hi:count` or an explicit comma list.
pub fn parse_strikes(s: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let ks = match parts.as_slice() {
        [lo, hi, count] => {
            let lo: f64 = Config::parse_value("strikes", lo)?;
            let hi: f64 = Config::parse_value("strikes", hi)?;
            let count: usize = Config::parse_value("strikes", count)?;
            if count == 0 || hi < lo {
                return err("key `strikes`: need lo <= hi and count >= 1");
            }
            rough_vol_core::pricing::strike_grid(count, lo, hi)
        }
        [_] => parse_list("strikes", s)?,
        _ => return err(format!("key `strikes`: expected lo:hi:count or a list, got `{s}`")),
    };
    if ks.is_empty() || ks.iter().any(|k| !k.is_finite()) {
        return err("key `strikes`: need finite log-moneyness values");
    }
    Ok(ks)
}
