//! Line-oriented `key = value` configuration files with `[section]` headers
//! and `#` comments.

use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use super::{ProblemSpec, Source, Tolerances};
use crate::error::{Error, Result};
use crate::grid::{read_snapshot, TorusGrid};

pub const SECTIONS: [&str; 5] = ["grid", "coefficients", "initial", "run", "tolerances"];

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: Vec<Entry>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    line,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown section [{name}]"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected 'key = value', found '{content}'"),
            })?;
            let section = section.clone().ok_or_else(|| Error::Config {
                line,
                message: "entry before any [section] header".into(),
            })?;
            let key = key.trim().to_string();
            if entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key '{key}' in [{section}]"),
                });
            }
            entries.push(Entry {
                section,
                key,
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.key == key)
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).map(|e| e.value.as_str())
    }

    pub fn get_parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        e.value.parse::<T>().map(Some).map_err(|_| Error::Config {
            line: e.line,
            message: format!("cannot parse '{}' for [{section}] {key}", e.value),
        })
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get_parsed(section, key)?.ok_or_else(|| Error::Config {
            line: 0,
            message: format!("missing required key [{section}] {key}"),
        })
    }

    /// Rejects keys of `section` that are not listed in `known`.
    pub fn check_known(&self, section: &str, known: &[&str]) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| e.section == section && !known.contains(&e.key.as_str()))
        {
            None => Ok(()),
            Some(e) => Err(Error::Config {
                line: e.line,
                message: format!("unknown key '{}' in [{section}]", e.key),
            }),
        }
    }
}

fn source(cfg: &Config, section: &str, key: &str, grid: TorusGrid, base: &Path) -> Result<Option<Source>> {
    let file_key = format!("{key}_file");
    match (cfg.get(section, key), cfg.get(section, &file_key)) {
        (Some(e), Some(_)) => Err(Error::Config {
            line: e.line,
            message: format!("both {key} and {file_key} given"),
        }),
        (Some(e), None) => Source::parse(&e.value).map(Some).map_err(|err| Error::Config {
            line: e.line,
            message: format!("{key}: {err}"),
        }),
        (None, Some(e)) => {
            let path = base.join(&e.value);
            let file = File::open(&path).map_err(|err| Error::Config {
                line: e.line,
                message: format!("{}: {err}", path.display()),
            })?;
            Ok(Some(Source::Table(read_snapshot(grid, file)?)))
        }
        (None, None) => Ok(None),
    }
}

impl ProblemSpec {
    /// Reads the problem from `[grid]`, `[coefficients]`, `[initial]`,
    /// `[run]` and `[tolerances]`. Table paths are relative to `base`.
    pub fn from_config(cfg: &Config, base: &Path) -> Result<Self> {
        cfg.check_known("grid", &["dim", "n"])?;
        cfg.check_known(
            "coefficients",
            &["D", "D_file", "pi", "pi_file", "phi", "phi_file", "beta"],
        )?;
        cfg.check_known("initial", &["f0", "f0_file", "mu", "Lambda"])?;
        cfg.check_known("tolerances", &["root", "picard"])?;

        let dim = cfg.get_parsed("grid", "dim")?.unwrap_or(1);
        let n = cfg.require("grid", "n")?;
        let grid = TorusGrid::new(dim, n)?;
        let req = |section: &str, key: &str| -> Result<Source> {
            source(cfg, section, key, grid, base)?.ok_or_else(|| Error::Config {
                line: 0,
                message: format!("missing [{section}] {key} (or {key}_file)"),
            })
        };
        let defaults = Tolerances::default();
        let spec = ProblemSpec {
            dim,
            n_per_axis: n,
            d: req("coefficients", "D")?,
            pi: source(cfg, "coefficients", "pi", grid, base)?.unwrap_or(Source::constant(1.0)),
            phi: source(cfg, "coefficients", "phi", grid, base)?.unwrap_or(Source::constant(0.0)),
            f0: req("initial", "f0")?,
            mu: cfg.get_parsed("initial", "mu")?,
            lambda: cfg.get_parsed("initial", "Lambda")?,
            beta_declared: cfg.get_parsed("coefficients", "beta")?.unwrap_or(0.5),
            t_final: cfg.get_parsed("run", "T_final")?.unwrap_or(1.0),
            tolerances: Tolerances {
                root: cfg.get_parsed("tolerances", "root")?.unwrap_or(defaults.root),
                picard: cfg.get_parsed("tolerances", "picard")?.unwrap_or(defaults.picard),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}
