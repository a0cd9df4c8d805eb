//! Flat `key = value` experiment configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::LabelColumn;
use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, SigmaRule};
use crate::numkit::Ridge;
use crate::pcsda::{Solver, Subclasses};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// A single negative subclass.
    Pcsda1,
    /// Subclass count chosen by cross validation.
    PcsdaK,
    /// Every negative sample is its own subclass.
    Csda,
}

impl Mode {
    pub fn default_k_grid(self) -> Vec<Subclasses> {
        match self {
            Mode::Pcsda1 => vec![Subclasses::Fixed(1)],
            Mode::PcsdaK => [5, 10, 15, 20].map(Subclasses::Fixed).to_vec(),
            Mode::Csda => vec![Subclasses::PerSample],
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pcsda1" | "pcsda-1" => Ok(Mode::Pcsda1),
            "pcsdak" | "pcsda-k" => Ok(Mode::PcsdaK),
            "csda" => Ok(Mode::Csda),
            other => Err(Error::config("mode", format!("expected pcsda1, pcsdak or csda, got {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pcsda1 => "pcsda1",
            Mode::PcsdaK => "pcsdak",
            Mode::Csda => "csda",
        })
    }
}

/// Parses `1-5,8,10` into a sorted list of distinct positive counts.
pub fn parse_count_list(field: &str, s: &str) -> Result<Vec<usize>> {
    let bad = |msg: String| Error::config(field, msg);
    let mut out = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("{t:?} is not a count")))
        };
        if let Some((a, b)) = part.split_once('-') {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(bad(format!("empty range {part:?}")));
            }
            out.extend(a..=b);
        } else {
            out.insert(num(part)?);
        }
    }
    if out.is_empty() {
        return Err(bad("list is empty".into()));
    }
    if out.contains(&0) {
        return Err(bad("counts must be positive".into()));
    }
    Ok(out.into_iter().collect())
}

fn parse_bool(field: &str, s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::config(field, format!("expected true or false, got {other:?}"))),
    }
}

fn parse_num<T: FromStr>(field: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(field, format!("cannot parse {s:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub label_col: LabelColumn,
    pub mode: Mode,
    pub solver: Solver,
    pub kernel: Option<KernelConfig>,
    pub d_grid: Vec<usize>,
    pub k_grid: Vec<Subclasses>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub ridge: Ridge,
    pub equiprobable: bool,
    /// Classes to evaluate; all classes when `None`.
    pub classes: Option<Vec<String>>,
}

const KEYS: &[&str] = &[
    "data",
    "label_col",
    "mode",
    "solver",
    "kernel",
    "sigma",
    "d_grid",
    "k_grid",
    "folds",
    "repeats",
    "seed",
    "train_fraction",
    "ridge",
    "equiprobable",
    "classes",
];

impl ExperimentConfig {
    /// Parses the text of a configuration. Lines are `key = value`; `#`
    /// starts a comment. Relative data paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", n + 1), format!("expected key = value, got {line:?}"))
            })?;
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::config(key, "unknown key"));
            }
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(Error::config(key, "given more than once"));
            }
            entries.push((key, value.trim().to_string()));
        }
        let get = |k: &str| entries.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());

        let data = get("data").ok_or_else(|| Error::config("data", "required"))?;
        let mut data = PathBuf::from(data);
        if let Some(base) = base {
            if data.is_relative() {
                data = base.join(data);
            }
        }
        let label_col = get("label_col").map(str::parse).transpose()?.unwrap_or(LabelColumn::Last);
        let mode = get("mode").map(str::parse).transpose()?.unwrap_or(Mode::PcsdaK);
        let solver = get("solver").map(str::parse).transpose()?.unwrap_or(Solver::Direct);
        let sigma = get("sigma").map(str::parse::<SigmaRule>).transpose()?;
        let kernel = match get("kernel").map(|s| s.to_ascii_lowercase()) {
            None => None,
            Some(k) if k == "none" || k == "linear" => None,
            Some(k) if k == "rbf" => Some(KernelConfig::rbf(sigma.unwrap_or(SigmaRule::MeanPositivePairwise))),
            Some(k) => return Err(Error::config("kernel", format!("expected none or rbf, got {k:?}"))),
        };
        if sigma.is_some() && kernel.is_none() {
            return Err(Error::config("sigma", "only meaningful with kernel = rbf"));
        }
        let d_grid = match get("d_grid") {
            Some(s) => parse_count_list("d_grid", s)?,
            None => (1..=25).collect(),
        };
        let k_grid = match get("k_grid") {
            Some(s) => {
                if mode != Mode::PcsdaK {
                    return Err(Error::config("k_grid", format!("fixed by mode {mode}")));
                }
                parse_count_list("k_grid", s)?.into_iter().map(Subclasses::Fixed).collect()
            }
            None => mode.default_k_grid(),
        };
        let folds: usize = get("folds").map(|s| parse_num("folds", s)).transpose()?.unwrap_or(5);
        if folds < 2 {
            return Err(Error::config("folds", "need at least 2"));
        }
        let repeats: usize = get("repeats").map(|s| parse_num("repeats", s)).transpose()?.unwrap_or(5);
        if repeats == 0 {
            return Err(Error::config("repeats", "must be positive"));
        }
        let seed = get("seed").map(|s| parse_num("seed", s)).transpose()?.unwrap_or(0);
        let train_fraction: f64 = get("train_fraction")
            .map(|s| parse_num("train_fraction", s))
            .transpose()?
            .unwrap_or(0.7);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1)"));
        }
        let ridge = get("ridge").map(str::parse).transpose()?.unwrap_or(Ridge::Auto);
        let equiprobable = get("equiprobable")
            .map(|s| parse_bool("equiprobable", s))
            .transpose()?
            .unwrap_or(false);
        let classes = match get("classes") {
            None => None,
            Some(s) => {
                let list: Vec<String> = s
                    .split(',')
                    .map(|c| c.trim().to_string())
                    .filter(|c| !c.is_empty())
                    .collect();
                if list.is_empty() {
                    return Err(Error::config("classes", "list is empty"));
                }
                Some(list)
            }
        };
        Ok(ExperimentConfig {
            data,
            label_col,
            mode,
            solver,
            kernel,
            d_grid,
            k_grid,
            folds,
            repeats,
            seed,
            train_fraction,
            ridge,
            equiprobable,
            classes,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent())
    }
}
