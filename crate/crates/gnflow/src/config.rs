//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{CoeffSpec, QuadratureSpec};
use crate::error::{Error, Result};
use crate::stability::SolveParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Blocking factor `L`.
    pub l: u32,
    /// Internal components `n`.
    pub n: u32,
    /// Number of RG steps `N`.
    pub big_n: u32,
    /// Extra volume exponent `M`.
    pub m: u32,
    pub g_f: f64,
    pub h: f64,
    pub c_e: f64,
    /// `None` fits the field-strength constant from the quadratic flow.
    pub c_z: Option<f64>,
    pub kappa: f64,
    /// Cap on the torus exponent of the coefficient integrals.
    pub j_cap: u32,
    pub cells_per_unit: usize,
    pub quad_order: usize,
    /// Truncation tolerance for image and momentum sums.
    pub kernel_tol: f64,
    /// RK4 steps in the continuation parameter.
    pub steps_t: usize,
    pub newton: bool,
    /// Grid of the final partition function, `"MxN"` points on the unit torus.
    pub z_grid: String,
    /// Block torus of the Mayer expansion, `"MxN"`.
    pub mayer_blocks: String,
    pub mayer_max_size: usize,
    pub mayer_max_activity: f64,
    /// Random samples for sampled checks.
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Coefficient table to reuse instead of recomputing.
    pub table: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            l: 2,
            n: 2,
            big_n: 32,
            m: 0,
            g_f: 0.01,
            h: 16.0,
            c_e: 1.0,
            c_z: None,
            kappa: 0.5,
            j_cap: 4,
            cells_per_unit: 8,
            quad_order: 2,
            kernel_tol: 1e-15,
            steps_t: 64,
            newton: true,
            z_grid: "3x1".into(),
            mayer_blocks: "3x3".into(),
            mayer_max_size: 2,
            mayer_max_activity: 0.05,
            samples: 100,
            seed: 1,
            out: PathBuf::from("out"),
            table: None,
        }
    }
}

fn field_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| field_err(key, format!("cannot parse {v:?}: {e}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if v.is_empty() || v == "auto" || v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

/// Parses `"MxN"`.
pub fn parse_dims(key: &str, s: &str) -> Result<[usize; 2]> {
    let (a, b) = s.split_once('x').ok_or_else(|| field_err(key, format!("expected MxN, got {s:?}")))?;
    Ok([parse(key, a.trim())?, parse(key, b.trim())?])
}

impl RunConfig {
    pub fn keys() -> &'static [&'static str] {
        &[
            "L", "n", "N", "M", "g_f", "h", "C_E", "C_Z", "kappa", "j_cap", "cells_per_unit", "quad_order", "kernel_tol",
            "steps_t", "newton", "z_grid", "mayer_blocks", "mayer_max_size", "mayer_max_activity", "samples", "seed",
            "out", "table",
        ]
    }

    /// Sets one field from its key; keys are case-sensitive.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "L" => self.l = parse(key, v)?,
            "n" => self.n = parse(key, v)?,
            "N" => self.big_n = parse(key, v)?,
            "M" => self.m = parse(key, v)?,
            "g_f" => self.g_f = parse(key, v)?,
            "h" => self.h = parse(key, v)?,
            "C_E" => self.c_e = parse(key, v)?,
            "C_Z" => self.c_z = parse_opt(key, v)?,
            "kappa" => self.kappa = parse(key, v)?,
            "j_cap" => self.j_cap = parse(key, v)?,
            "cells_per_unit" => self.cells_per_unit = parse(key, v)?,
            "quad_order" => self.quad_order = parse(key, v)?,
            "kernel_tol" => self.kernel_tol = parse(key, v)?,
            "steps_t" => self.steps_t = parse(key, v)?,
            "newton" => self.newton = parse(key, v)?,
            "z_grid" => self.z_grid = v.into(),
            "mayer_blocks" => self.mayer_blocks = v.into(),
            "mayer_max_size" => self.mayer_max_size = parse(key, v)?,
            "mayer_max_activity" => self.mayer_max_activity = parse(key, v)?,
            "samples" => self.samples = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "table" => self.table = (!v.is_empty() && v != "none").then(|| PathBuf::from(v)),
            _ => return Err(field_err(key, format!("unknown key (known: {})", Self::keys().join(", ")))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_str_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| field_err(&format!("line {}", i + 1), format!("expected key = value, got {line:?}")))?;
            c.set(k.trim(), v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_str_kv(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides and revalidates.
    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Result<Self> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| field_err(o, "override must be key=value"))?;
            self.set(k.trim(), v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| if ok { Ok(()) } else { Err(field_err(field, msg)) };
        check(self.l >= 2, "L", "the blocking factor must be at least 2")?;
        check(self.n >= 1, "n", "at least one internal component is needed")?;
        check(self.big_n >= 1, "N", "at least one RG step is needed")?;
        check(self.g_f > 0.0 && self.g_f <= 0.1, "g_f", "the final coupling must lie in (0, 0.1]")?;
        check(self.h > 0.0, "h", "the norm parameter must be positive")?;
        check(self.c_e > 0.0, "C_E", "must be positive")?;
        check(self.c_z.is_none_or(|c| c > 0.0), "C_Z", "must be positive or auto")?;
        check((0.0..1.0).contains(&self.kappa), "kappa", "must lie in [0, 1)")?;
        check(self.j_cap >= 1, "j_cap", "must be at least 1")?;
        check(
            self.cells_per_unit >= 8 && self.cells_per_unit.is_multiple_of(2),
            "cells_per_unit",
            "must be even and at least 8",
        )?;
        check((1..=4).contains(&self.quad_order), "quad_order", "must be 1 to 4")?;
        check(self.kernel_tol > 0.0 && self.kernel_tol < 1e-6, "kernel_tol", "must lie in (0, 1e-6)")?;
        check(self.steps_t >= 1, "steps_t", "must be at least 1")?;
        let z = parse_dims("z_grid", &self.z_grid)?;
        check(z[0] >= 1 && z[1] >= 1, "z_grid", "grid sides must be positive")?;
        let b = parse_dims("mayer_blocks", &self.mayer_blocks)?;
        check(b[0] * b[1] <= 16 && b[0] >= 1 && b[1] >= 1, "mayer_blocks", "at most 16 blocks")?;
        check(self.mayer_max_size >= 1, "mayer_max_size", "must be at least 1")?;
        check(
            self.mayer_max_activity > 0.0 && self.mayer_max_activity <= 0.05,
            "mayer_max_activity",
            "activities must lie in (0, 0.05]",
        )?;
        check(self.samples >= 1, "samples", "must be at least 1")
    }

    /// Canonical `key = value` text; parsing it gives back the same config.
    pub fn to_kv(&self) -> String {
        let opt = |o: &Option<f64>| o.map_or("auto".to_string(), |v| format!("{v:?}"));
        let mut m = BTreeMap::new();
        m.insert("L", self.l.to_string());
        m.insert("n", self.n.to_string());
        m.insert("N", self.big_n.to_string());
        m.insert("M", self.m.to_string());
        m.insert("g_f", format!("{:?}", self.g_f));
        m.insert("h", format!("{:?}", self.h));
        m.insert("C_E", format!("{:?}", self.c_e));
        m.insert("C_Z", opt(&self.c_z));
        m.insert("kappa", format!("{:?}", self.kappa));
        m.insert("j_cap", self.j_cap.to_string());
        m.insert("cells_per_unit", self.cells_per_unit.to_string());
        m.insert("quad_order", self.quad_order.to_string());
        m.insert("kernel_tol", format!("{:?}", self.kernel_tol));
        m.insert("steps_t", self.steps_t.to_string());
        m.insert("newton", self.newton.to_string());
        m.insert("z_grid", self.z_grid.clone());
        m.insert("mayer_blocks", self.mayer_blocks.clone());
        m.insert("mayer_max_size", self.mayer_max_size.to_string());
        m.insert("mayer_max_activity", format!("{:?}", self.mayer_max_activity));
        m.insert("samples", self.samples.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("out", self.out.display().to_string());
        m.insert("table", self.table.as_ref().map_or("none".into(), |p| p.display().to_string()));
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical text without the output location, lowercase hex.
    pub fn hash(&self) -> String {
        let inputs: String = self.to_kv().lines().filter(|l| !l.starts_with("out ")).map(|l| format!("{l}\n")).collect();
        Sha256::digest(inputs.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn coeff_spec(&self) -> CoeffSpec {
        CoeffSpec { l: self.l, n: self.n, m: self.m, j_cap: self.j_cap }
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec { cells_per_unit: self.cells_per_unit, order: self.quad_order, tol: self.kernel_tol, ..Default::default() }
    }

    pub fn solve_params(&self) -> SolveParams {
        SolveParams { g_f: self.g_f, steps_t: self.steps_t, c_e: self.c_e, c_z: self.c_z, newton: self.newton, ..Default::default() }
    }
}

/// An artifact together with the configuration and its hash.
#[derive(Clone, Debug, Serialize)]
pub struct Artifact<T: Serialize> {
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub passed: bool,
    pub result: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(command: &str, config: &RunConfig, passed: bool, result: T) -> Self {
        Self { command: command.into(), config: config.clone(), config_hash: config.hash(), passed, result }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash() {
        let c = RunConfig::default().with_overrides(&["N=8", "C_Z=2.5", "seed = 7"]).unwrap();
        let back = RunConfig::from_str_kv(&c.to_kv()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(RunConfig::default().hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let moved = c.clone().with_overrides(&["out=elsewhere"]).unwrap();
        assert_eq!(moved.hash(), c.hash());
    }

    #[test]
    fn field_level_errors() {
        match RunConfig::default().with_overrides(&["L=1"]) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "L"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::from_str_kv("bogus = 1"), Err(Error::Config { .. })));
        assert!(matches!(RunConfig::from_str_kv("g_f = x"), Err(Error::Config { .. })));
        assert!(RunConfig::from_str_kv("# comment\n\nN = 4 # trailing\n").unwrap().big_n == 4);
    }
}
