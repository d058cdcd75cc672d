//! Plain-text `key=value` problem configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! problem = low_thrust
//! T = 1.0
//! N = 200
//! q0 = 1.0, 0.0
//! terminal_mode = fixed
//! params.m = 1.0
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Mayer, Model, Terminal};
use crate::registry::{self, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminalMode {
    Fixed,
    Free,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProblemConfig {
    pub problem: Option<String>,
    pub t_final: Option<f64>,
    pub n: Option<usize>,
    pub q0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub qt: Option<Vec<f64>>,
    pub vt: Option<Vec<f64>>,
    pub terminal_mode: Option<TerminalMode>,
    pub params: Vec<(String, f64)>,
    pub tol_newton: Option<f64>,
    pub tol_shoot: Option<f64>,
}

fn real(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| Error::Config(format!("`{key}`: expected a number, got `{}`", v.trim())))
}

fn vector(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| real(key, s))
        .collect()
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ProblemConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "problem" => c.problem = Some(value.to_string()),
                "T" => c.t_final = Some(real(key, value)?),
                "N" => {
                    c.n = Some(value.parse().map_err(|_| Error::Config(format!("`N`: expected a positive integer, got `{value}`")))?)
                }
                "q0" => c.q0 = Some(vector(key, value)?),
                "v0" => c.v0 = Some(vector(key, value)?),
                "qT" => c.qt = Some(vector(key, value)?),
                "vT" => c.vt = Some(vector(key, value)?),
                "terminal_mode" => {
                    c.terminal_mode = Some(match value {
                        "fixed" => TerminalMode::Fixed,
                        "free" => TerminalMode::Free,
                        other => return Err(Error::Config(format!("`terminal_mode`: expected fixed or free, got `{other}`"))),
                    })
                }
                "tol_newton" => c.tol_newton = Some(real(key, value)?),
                "tol_shoot" => c.tol_shoot = Some(real(key, value)?),
                k if k.starts_with("params.") && k.len() > "params.".len() => {
                    c.params.push((k["params.".len()..].to_string(), real(key, value)?))
                }
                other => return Err(Error::UnknownKey(other.to_string())),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Registry problem with the configured overrides applied. `fallback`
    /// names the problem when the file does not.
    pub fn build(&self, fallback: Option<&str>) -> Result<Problem> {
        let name = self
            .problem
            .as_deref()
            .or(fallback)
            .ok_or_else(|| Error::Config("no problem selected".into()))?;
        let mut p = registry::problem(name)?;
        for (k, v) in &self.params {
            p.model.set_param(k, *v)?;
        }
        let n = p.n();
        let check = |key: &str, v: &Vec<f64>| -> Result<Vec<f64>> {
            if v.len() != n {
                return Err(Error::Config(format!("`{key}` has {} entries, problem `{name}` needs {n}", v.len())));
            }
            Ok(v.clone())
        };
        if let Some(t) = self.t_final {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("`T` must be positive, got {t}")));
            }
            p.boundary.t_final = t;
        }
        if let Some(v) = &self.q0 {
            p.boundary.q0 = check("q0", v)?;
        }
        if let Some(v) = &self.v0 {
            p.boundary.v0 = check("v0", v)?;
        }
        let (mut qt, mut vt) = match &p.boundary.terminal {
            Terminal::Fixed { q, v } => (q.clone(), v.clone()),
            Terminal::Free(_) => (p.boundary.q0.clone(), p.boundary.v0.clone()),
        };
        if let Some(v) = &self.qt {
            qt = check("qT", v)?;
        }
        if let Some(v) = &self.vt {
            vt = check("vT", v)?;
        }
        let mode = self.terminal_mode.unwrap_or(match p.boundary.terminal {
            Terminal::Fixed { .. } => TerminalMode::Fixed,
            Terminal::Free(_) => TerminalMode::Free,
        });
        p.boundary.terminal = match (mode, &p.boundary.terminal) {
            (TerminalMode::Fixed, _) => Terminal::Fixed { q: qt, v: vt },
            (TerminalMode::Free, Terminal::Free(m)) if self.qt.is_none() && self.vt.is_none() => Terminal::Free(m.clone()),
            // A free end on a fixed-end problem penalizes the distance to the
            // configured target.
            (TerminalMode::Free, _) => Terminal::Free(Mayer::Quadratic { weight: 1.0, q: qt, v: vt }),
        };
        if let Some(tol) = self.tol_newton {
            if !(tol > 0.0) {
                return Err(Error::Config(format!("`tol_newton` must be positive, got {tol}")));
            }
            p.control_tol = tol;
        }
        if let Some(tol) = self.tol_shoot {
            if !(tol > 0.0) {
                return Err(Error::Config(format!("`tol_shoot` must be positive, got {tol}")));
            }
        }
        Ok(p)
    }
}
