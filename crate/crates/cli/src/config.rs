//! Flag and config-file resolution. Flags win over the file, the file wins
//! over built-in defaults; the environment is never read.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use martlab_core::rational::{parse_rational, Rational};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DEPTH: u64 = 2000;
pub const DEFAULT_LEVELS: u64 = 10_000;
pub const DEFAULT_HORIZON: u64 = 1000;
pub const DEFAULT_WITNESS_HORIZON: u64 = 10_000;
pub const DEFAULT_EPSILON: &str = "2/5";
pub const DEFAULT_THRESHOLD: &str = "1000";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_REPS: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Keys accepted in a TOML config file. Keys a command does not use are ignored.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub depth: Option<u64>,
    pub levels: Option<u64>,
    pub horizon: Option<u64>,
    pub epsilon: Option<String>,
    pub threshold: Option<String>,
    pub grid: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Enumeration depth flag.
#[derive(Debug, Clone, Args, Default)]
pub struct DepthFlag {
    /// Enumeration depth N [default: 2000]
    #[arg(long)]
    pub depth: Option<u64>,
}

/// Output flags shared by every command.
#[derive(Debug, Clone, Args, Default)]
pub struct OutputFlags {
    /// Report format [default: json]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the report to this file (atomically) instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_q(name: &str, s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| format!("--{name}: {e}"))
}

pub fn parse_grid(items: &[String]) -> Result<Vec<Rational>, String> {
    items
        .iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_q("grid", s))
        .collect()
}

pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None::<u64>, None, 3), 3);
    }

    #[test]
    fn file_rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("depth = 5\nbogus = 1\n").is_err());
        let c: FileConfig = toml::from_str("depth = 5\nformat = \"csv\"\ngrid = [\"0\", \"1/2\"]\n").unwrap();
        assert_eq!(c.depth, Some(5));
        assert_eq!(c.format, Some(Format::Csv));
        assert_eq!(parse_grid(c.grid.as_deref().unwrap()).unwrap().len(), 2);
    }
}
