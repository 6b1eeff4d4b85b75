//! Flat `key=value` run configuration.
//!
//! Pairs are separated by whitespace or newlines; `#` starts a comment.
//! Values are double-quoted strings, bracketed number lists, or bare tokens:
//!
//! ```text
//! F="sigma_k:2" n=2 m=128
//! initial="perturbed_sphere" initial.params=[1.0,0.1,2]
//! mode="both"
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvfn::CurvatureFunction;
use crate::diagnostics::DEFAULT_SIGMA;
use crate::flow::{FlowConfig, InitialDatum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing required key '{0}'")]
    MissingKey(&'static str),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{0}' given more than once")]
    DuplicateKey(String),
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("malformed value for '{key}': {msg}")]
    Malformed { key: String, msg: String },
    #[error("invalid curvature function '{name}': {msg}")]
    Function { name: String, msg: String },
    #[error("'{key}' out of range: {msg}")]
    OutOfRange { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Primal,
    Dual,
    Both,
    Verify,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "primal" => Ok(Mode::Primal),
            "dual" => Ok(Mode::Dual),
            "both" => Ok(Mode::Both),
            "verify" => Ok(Mode::Verify),
            other => Err(format!("expected primal, dual, both or verify, got '{other}'")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Primal => "primal",
            Mode::Dual => "dual",
            Mode::Both => "both",
            Mode::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: FlowConfig,
    pub mode: Mode,
    pub sigma: f64,
    /// Output directory.
    pub out: PathBuf,
}

const KEYS: [&str; 14] = [
    "F",
    "n",
    "m",
    "initial",
    "initial.params",
    "cfl",
    "u_stop",
    "mode",
    "record_every",
    "sigma",
    "out",
    "seed",
    "dt_min",
    "t_end",
];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    List(Vec<String>),
    Bare(String),
}

fn tokenize(text: &str) -> Result<Vec<(String, Value)>, ConfigError> {
    let mut pairs = Vec::new();
    let mut chars = text.chars().peekable();
    loop {
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
            } else if c == '#' {
                while chars.next().is_some_and(|c| c != '\n') {}
            } else {
                break;
            }
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        while chars.peek().is_some_and(|c| *c == ' ' || *c == '\t') {
            chars.next();
        }
        if chars.next() != Some('=') {
            return Err(ConfigError::Syntax(format!("expected '=' after '{key}'")));
        }
        while chars.peek().is_some_and(|c| *c == ' ' || *c == '\t') {
            chars.next();
        }
        let value = match chars.peek() {
            Some('"') => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(c) => s.push(c),
                            None => return Err(ConfigError::Syntax("unterminated string".into())),
                        },
                        Some(c) => s.push(c),
                        None => {
                            return Err(ConfigError::Syntax(format!(
                                "unterminated string for '{key}'"
                            )))
                        }
                    }
                }
                Value::Str(s)
            }
            Some('[') => {
                chars.next();
                let mut body = String::new();
                loop {
                    match chars.next() {
                        Some(']') => break,
                        Some(c) => body.push(c),
                        None => {
                            return Err(ConfigError::Syntax(format!("unterminated list for '{key}'")))
                        }
                    }
                }
                let items = body
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                Value::List(items)
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '#' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                if s.is_empty() {
                    return Err(ConfigError::Syntax(format!("missing value for '{key}'")));
                }
                Value::Bare(s)
            }
        };
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn text_of(key: &str, v: &Value) -> Result<String, ConfigError> {
    match v {
        Value::Str(s) | Value::Bare(s) => Ok(s.clone()),
        Value::List(_) => Err(ConfigError::Malformed {
            key: key.into(),
            msg: "expected a scalar, got a list".into(),
        }),
    }
}

fn number<T: FromStr>(key: &str, v: &Value) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    let s = text_of(key, v)?;
    s.parse().map_err(|e: T::Err| ConfigError::Malformed {
        key: key.into(),
        msg: format!("'{s}': {e}"),
    })
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunManifest, ConfigError> {
    let pairs = tokenize(text)?;
    let mut seen: Vec<&str> = Vec::new();
    for (k, _) in &pairs {
        let Some(&known) = KEYS.iter().find(|&&x| x == k) else {
            return Err(ConfigError::UnknownKey(k.clone()));
        };
        if seen.contains(&known) {
            return Err(ConfigError::DuplicateKey(k.clone()));
        }
        seen.push(known);
    }
    let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v);
    let require = |key: &'static str| get(key).ok_or(ConfigError::MissingKey(key));

    let function = text_of("F", require("F")?)?;
    let n: usize = number("n", require("n")?)?;
    let m: usize = number("m", require("m")?)?;
    if n == 0 {
        return Err(ConfigError::OutOfRange {
            key: "n".into(),
            msg: "must be at least 1".into(),
        });
    }
    CurvatureFunction::parse(&function, n).map_err(|e| ConfigError::Function {
        name: function.clone(),
        msg: e.to_string(),
    })?;

    let initial_name = text_of("initial", require("initial")?)?;
    let params: Vec<f64> = match require("initial.params")? {
        Value::List(items) => items
            .iter()
            .map(|s| {
                s.parse().map_err(|e| ConfigError::Malformed {
                    key: "initial.params".into(),
                    msg: format!("'{s}': {e}"),
                })
            })
            .collect::<Result<_, _>>()?,
        other => vec![number("initial.params", other)?],
    };
    let initial = InitialDatum::from_parts(&initial_name, &params).map_err(|e| {
        ConfigError::OutOfRange {
            key: "initial.params".into(),
            msg: e.to_string(),
        }
    })?;

    let mut config = FlowConfig::new(&function, n, m, initial);
    if let Some(v) = get("cfl") {
        config.cfl = number("cfl", v)?;
    }
    if let Some(v) = get("u_stop") {
        config.u_stop = number("u_stop", v)?;
    }
    if let Some(v) = get("dt_min") {
        config.dt_min = number("dt_min", v)?;
    }
    if let Some(v) = get("record_every") {
        config.record_every = number("record_every", v)?;
    }
    if let Some(v) = get("seed") {
        config.seed = number("seed", v)?;
    }
    if let Some(v) = get("t_end") {
        config.t_end = Some(number("t_end", v)?);
    }
    let range = |key: &str, ok: bool, msg: &str| {
        if ok {
            Ok(())
        } else {
            Err(ConfigError::OutOfRange {
                key: key.into(),
                msg: msg.into(),
            })
        }
    };
    range("m", m >= crate::sphere_grid::MIN_NODES, "need at least 16 nodes")?;
    range("cfl", config.cfl > 0.0 && config.cfl <= 0.5, "must lie in (0, 0.5]")?;
    range("u_stop", config.u_stop > 0.0, "must be positive")?;
    range("dt_min", config.dt_min > 0.0, "must be positive")?;
    range("record_every", config.record_every >= 1, "must be at least 1")?;
    if let Some(te) = config.t_end {
        range("t_end", te > 0.0, "must be positive")?;
    }

    let mode = match get("mode") {
        Some(v) => text_of("mode", v)?
            .parse()
            .map_err(|msg| ConfigError::Malformed {
                key: "mode".into(),
                msg,
            })?,
        None => Mode::Primal,
    };
    let sigma = match get("sigma") {
        Some(v) => number("sigma", v)?,
        None => DEFAULT_SIGMA,
    };
    range("sigma", sigma > 0.0 && sigma < 1.0, "must lie in (0, 1)")?;
    let out = match get("out") {
        Some(v) => PathBuf::from(text_of("out", v)?),
        None => PathBuf::from("out"),
    };
    config.validate().map_err(|e| ConfigError::OutOfRange {
        key: "config".into(),
        msg: e.to_string(),
    })?;
    Ok(RunManifest {
        config,
        mode,
        sigma,
        out,
    })
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('"');
    q
}

impl RunManifest {
    /// Renders the manifest so that [`parse_config`] reproduces it exactly.
    pub fn to_config_string(&self) -> String {
        let c = &self.config;
        let params: Vec<String> = c.initial.params().iter().map(|p| format!("{p:?}")).collect();
        let mut s = format!(
            "F={}\nn={}\nm={}\ninitial={}\ninitial.params=[{}]\ncfl={:?}\nu_stop={:?}\ndt_min={:?}\nrecord_every={}\nseed={}\nmode={}\nsigma={:?}\nout={}\n",
            quote(&c.function),
            c.n,
            c.m,
            quote(c.initial.name()),
            params.join(","),
            c.cfl,
            c.u_stop,
            c.dt_min,
            c.record_every,
            c.seed,
            quote(&self.mode.to_string()),
            self.sigma,
            quote(&self.out.to_string_lossy()),
        );
        if let Some(te) = c.t_end {
            s.push_str(&format!("t_end={te:?}\n"));
        }
        s
    }
}
