//! Flat `key=value` run configuration with dotted section keys.
//!
//! Values come from an optional file and from command-line flags named after
//! the keys; flags win. Relative paths in a file are taken relative to the
//! file's directory, relative paths given as flags relative to the working
//! directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ensemble::QuantityKind;
use crate::error::{DsiError, Result};
use crate::esmda::{EsmdaConfig, MdaSchedule};
use crate::localization::LocalizationSpec;
use crate::rml::{LbfgsConfig, RmlConfig};

/// A recognised configuration key.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    pub is_path: bool,
}

const fn key(name: &'static str, help: &'static str) -> Key {
    Key { name, help, is_path: false }
}

const fn path_key(name: &'static str, help: &'static str) -> Key {
    Key { name, help, is_path: true }
}

pub const RUN_KEYS: &[Key] = &[
    key("method", "inversion method: dsi_esmda or dsi_rml [dsi_esmda]"),
    path_key("layout", "layout CSV"),
    path_key("ensemble", "prior ensemble CSV"),
    path_key("observations", "observations CSV"),
    path_key("output", "output directory"),
    path_key("reference", "optional reference vector CSV (id,value) for coverage"),
    key("seed", "random seed [0]"),
    key("parallel", "use the thread pool [true]"),
    key("svd.energy", "singular-value energy kept [0.99]"),
    key("esmda.na", "number of data assimilations [4]"),
    key("esmda.alphas", "comma-separated inflation factors [na copies of na]"),
    key("localization.enabled", "apply the taper [true when any length is given]"),
    key("localization.lx", "critical length along x' in m [2000]"),
    key("localization.ly", "critical length along y' in m [2000]"),
    key("localization.t", "critical time difference in days [6000]"),
    key("localization.theta", "counterclockwise rotation in degrees [0]"),
    key("truncate.kinds", "kinds clamped at zero after the update, or 'none' [water_rate]"),
    key("rml.samples", "posterior samples [100]"),
    key("rml.anamorphosis", "apply the empirical-CDF transform [true]"),
    key("rml.anamorphosis_draws", "PCA draws for the transform [ensemble size]"),
    key("rml.rescale", "PCA of the noise-scaled ensemble [false]"),
    key("rml.max_iterations", "L-BFGS iteration cap [500]"),
    key("rml.memory", "L-BFGS correction pairs [10]"),
    key("rml.grad_tol", "L-BFGS relative gradient tolerance [1e-6]"),
    key("emit.posterior", "write posterior.csv [true]"),
    key("emit.percentiles", "write percentiles.csv [true]"),
    key("emit.mismatch", "write mismatch tables [true]"),
    key("emit.coverage", "write coverage.csv when a reference is given [true]"),
];

fn find_key(name: &str) -> Option<&'static Key> {
    RUN_KEYS.iter().find(|k| k.name == name)
}

/// Raw key/value pairs before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str, base_dir: Option<&Path>, origin: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DsiError::Config(format!("{origin}:{}: expected key=value, found '{line}'", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if kv.0.contains_key(k) {
                return Err(DsiError::Config(format!("{origin}:{}: key '{k}' given twice", n + 1)));
            }
            kv.set(k, v, base_dir)
                .map_err(|e| DsiError::Config(format!("{origin}:{}: {}", n + 1, strip_prefix(&e))))?;
        }
        Ok(kv)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DsiError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent(), &path.display().to_string())
    }

    /// Sets a key, resolving relative paths against `base_dir` (or the
    /// working directory when `None`).
    pub fn set(&mut self, name: &str, value: &str, base_dir: Option<&Path>) -> Result<()> {
        let key = find_key(name).ok_or_else(|| DsiError::Config(format!("unknown key '{name}'")))?;
        let value = if key.is_path && !value.is_empty() {
            let p = Path::new(value);
            let joined = match base_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p.to_path_buf(),
            };
            std::path::absolute(&joined)
                .map_err(|e| DsiError::Config(format!("{name}: cannot resolve '{value}': {e}")))?
                .display()
                .to_string()
        } else {
            value.to_owned()
        };
        self.0.insert(name.to_owned(), value);
        Ok(())
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: KeyValues) {
        self.0.extend(other.0);
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, name: &str, default: T) -> Result<T> {
        match self.get(name) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| DsiError::Config(format!("{name}: cannot parse '{raw}'"))),
        }
    }

    fn flag(&self, name: &str, default: bool) -> Result<bool> {
        match self.get(name).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(other) => Err(DsiError::Config(format!("{name}: expected true/false, found '{other}'"))),
        }
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        self.get(name)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .ok_or_else(|| DsiError::Config(format!("missing required key '{name}'")))
    }
}

fn strip_prefix(e: &DsiError) -> String {
    match e {
        DsiError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DsiEsmda,
    DsiRml,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::DsiEsmda => "dsi_esmda",
            Method::DsiRml => "dsi_rml",
        }
    }
}

impl FromStr for Method {
    type Err = DsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsi_esmda" => Ok(Method::DsiEsmda),
            "dsi_rml" => Ok(Method::DsiRml),
            other => Err(DsiError::Config(format!("method must be dsi_esmda or dsi_rml, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitFlags {
    pub posterior: bool,
    pub percentiles: bool,
    pub mismatch: bool,
    pub coverage: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            posterior: true,
            percentiles: true,
            mismatch: true,
            coverage: true,
        }
    }
}

/// Fully typed run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub layout: PathBuf,
    pub ensemble: PathBuf,
    pub observations: PathBuf,
    pub output: PathBuf,
    pub reference: Option<PathBuf>,
    pub esmda: EsmdaConfig,
    pub rml: RmlConfig,
    pub emit: EmitFlags,
    /// Normalised key/value form, written as the run manifest.
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let method: Method = kv.get("method").unwrap_or("dsi_esmda").parse()?;
        let seed: u64 = kv.typed("seed", 0)?;
        let parallel = kv.flag("parallel", true)?;
        let energy_xi: f64 = kv.typed("svd.energy", 0.99)?;

        let alphas = match kv.get("esmda.alphas") {
            Some(raw) => {
                let alphas = raw
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| DsiError::Config(format!("esmda.alphas: cannot parse '{raw}'")))?;
                if let Some(na) = kv.get("esmda.na") {
                    let na: usize = na.parse().map_err(|_| DsiError::Config(format!("esmda.na: cannot parse '{na}'")))?;
                    if na != alphas.len() {
                        return Err(DsiError::Config(format!("esmda.na={na} but esmda.alphas has {} entries", alphas.len())));
                    }
                }
                alphas
            }
            None => {
                let na: usize = kv.typed("esmda.na", 4)?;
                if na == 0 {
                    return Err(DsiError::Config("esmda.na must be positive".into()));
                }
                vec![na as f64; na]
            }
        };
        let schedule = MdaSchedule::new(alphas).map_err(|e| DsiError::Config(format!("esmda schedule: {e}")))?;

        let any_length = ["localization.lx", "localization.ly", "localization.t"].iter().any(|k| kv.get(k).is_some());
        let defaults = LocalizationSpec::disabled();
        let theta_deg: f64 = kv.typed("localization.theta", 0.0)?;
        let localization = LocalizationSpec {
            lx: kv.typed("localization.lx", defaults.lx)?,
            ly: kv.typed("localization.ly", defaults.ly)?,
            t: kv.typed("localization.t", defaults.t)?,
            theta: theta_deg.to_radians(),
            enabled: kv.flag("localization.enabled", any_length)?,
        };

        let truncate_negative_kinds = match kv.get("truncate.kinds").map(str::trim) {
            None => BTreeSet::from([QuantityKind::WaterRate]),
            Some("" | "none") => BTreeSet::new(),
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim().parse().map_err(|e: DsiError| DsiError::Config(format!("truncate.kinds: {e}"))))
                .collect::<Result<_>>()?,
        };

        let esmda = EsmdaConfig {
            schedule,
            energy_xi,
            localization,
            rng_seed: seed,
            truncate_negative_kinds,
            parallel,
        };
        let rml_defaults = RmlConfig::default();
        let rml = RmlConfig {
            energy_xi,
            n_samples: kv.typed("rml.samples", rml_defaults.n_samples)?,
            anamorphosis: kv.flag("rml.anamorphosis", rml_defaults.anamorphosis)?,
            anamorphosis_draws: kv.get("rml.anamorphosis_draws").map(|_| kv.typed("rml.anamorphosis_draws", 0)).transpose()?,
            rescale: kv.flag("rml.rescale", rml_defaults.rescale)?,
            optimizer: LbfgsConfig {
                max_iterations: kv.typed("rml.max_iterations", rml_defaults.optimizer.max_iterations)?,
                memory: kv.typed("rml.memory", rml_defaults.optimizer.memory)?,
                grad_tol: kv.typed("rml.grad_tol", rml_defaults.optimizer.grad_tol)?,
                ..rml_defaults.optimizer
            },
            rng_seed: seed,
            parallel,
        };
        match method {
            Method::DsiEsmda => esmda.validate()?,
            Method::DsiRml => rml.validate()?,
        }
        let emit = EmitFlags {
            posterior: kv.flag("emit.posterior", true)?,
            percentiles: kv.flag("emit.percentiles", true)?,
            mismatch: kv.flag("emit.mismatch", true)?,
            coverage: kv.flag("emit.coverage", true)?,
        };

        let layout = kv.path("layout")?;
        let ensemble = kv.path("ensemble")?;
        let observations = kv.path("observations")?;
        let output = kv.path("output")?;
        let reference = kv.get("reference").filter(|s| !s.is_empty()).map(PathBuf::from);
        for (name, p) in [("layout", &layout), ("ensemble", &ensemble), ("observations", &observations)]
            .into_iter()
            .chain(reference.as_ref().map(|r| ("reference", r)))
        {
            if !p.is_file() {
                return Err(DsiError::Config(format!("{name}: file '{}' does not exist", p.display())));
            }
        }

        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut resolved = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            resolved.insert(k.to_owned(), v);
        };
        put("method", method.as_str().into());
        put("layout", layout.display().to_string());
        put("ensemble", ensemble.display().to_string());
        put("observations", observations.display().to_string());
        put("output", output.display().to_string());
        if let Some(r) = &reference {
            put("reference", r.display().to_string());
        }
        put("seed", seed.to_string());
        put("parallel", parallel.to_string());
        put("svd.energy", energy_xi.to_string());
        put("esmda.na", esmda.schedule.len().to_string());
        put("esmda.alphas", list(esmda.schedule.alphas()));
        put("localization.enabled", localization.enabled.to_string());
        put("localization.lx", localization.lx.to_string());
        put("localization.ly", localization.ly.to_string());
        put("localization.t", localization.t.to_string());
        put("localization.theta", theta_deg.to_string());
        let kinds: Vec<&str> = esmda.truncate_negative_kinds.iter().map(|k| k.as_str()).collect();
        put("truncate.kinds", if kinds.is_empty() { "none".into() } else { kinds.join(",") });
        put("rml.samples", rml.n_samples.to_string());
        put("rml.anamorphosis", rml.anamorphosis.to_string());
        if let Some(n) = rml.anamorphosis_draws {
            put("rml.anamorphosis_draws", n.to_string());
        }
        put("rml.rescale", rml.rescale.to_string());
        put("rml.max_iterations", rml.optimizer.max_iterations.to_string());
        put("rml.memory", rml.optimizer.memory.to_string());
        put("rml.grad_tol", rml.optimizer.grad_tol.to_string());
        put("emit.posterior", emit.posterior.to_string());
        put("emit.percentiles", emit.percentiles.to_string());
        put("emit.mismatch", emit.mismatch.to_string());
        put("emit.coverage", emit.coverage.to_string());

        Ok(Self {
            method,
            layout,
            ensemble,
            observations,
            output,
            reference,
            esmda,
            rml,
            emit,
            resolved,
        })
    }

    /// Manifest text: every resolved key, preceded by `#` comment lines.
    pub fn manifest(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        for (k, v) in &self.resolved {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn with_inputs() -> (TempDir, KeyValues) {
        let d = TempDir::new().unwrap();
        for f in ["l.csv", "e.csv", "o.csv"] {
            std::fs::write(d.path().join(f), "").unwrap();
        }
        let text = "# comment\nlayout = l.csv\nensemble=e.csv\nobservations=o.csv\noutput=out\n";
        let kv = KeyValues::parse(text, Some(d.path()), "test.cfg").unwrap();
        (d, kv)
    }

    #[test]
    fn defaults() {
        let (d, kv) = with_inputs();
        let cfg = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.method, Method::DsiEsmda);
        assert_eq!(cfg.esmda.schedule.alphas(), &[4.0; 4]);
        assert_eq!(cfg.esmda.energy_xi, 0.99);
        assert!(!cfg.esmda.localization.enabled);
        assert_eq!(cfg.output, d.path().join("out"));
        assert!(cfg.esmda.truncate_negative_kinds.contains(&QuantityKind::WaterRate));
    }

    #[test]
    fn lengths_enable_localization_and_theta_is_degrees() {
        let (_d, mut kv) = with_inputs();
        kv.set("localization.lx", "1500", None).unwrap();
        kv.set("localization.theta", "90", None).unwrap();
        let cfg = RunConfig::from_key_values(&kv).unwrap();
        assert!(cfg.esmda.localization.enabled);
        assert_eq!(cfg.esmda.localization.lx, 1500.0);
        assert_eq!(cfg.esmda.localization.ly, 2000.0);
        assert!((cfg.esmda.localization.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rml_zero_samples_is_config_error() {
        let (_d, mut kv) = with_inputs();
        kv.set("method", "dsi_rml", None).unwrap();
        kv.set("rml.samples", "0", None).unwrap();
        assert_eq!(RunConfig::from_key_values(&kv).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn config_errors() {
        let (_d, mut kv) = with_inputs();
        assert!(kv.set("esmda.nope", "1", None).is_err());
        assert!(KeyValues::parse("layout\n", None, "x").unwrap_err().to_string().contains("x:1"));
        assert!(KeyValues::parse("seed=1\nseed=2\n", None, "x").is_err());
        kv.set("esmda.alphas", "2,3", None).unwrap();
        let e = RunConfig::from_key_values(&kv).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        kv.set("esmda.alphas", "2,2", None).unwrap();
        kv.set("esmda.na", "3", None).unwrap();
        assert!(RunConfig::from_key_values(&kv).is_err());
        let mut kv = KeyValues::new();
        kv.set("layout", "/does/not/exist.csv", None).unwrap();
        assert_eq!(RunConfig::from_key_values(&kv).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn manifest_reparses_to_same_config() {
        let (_d, mut kv) = with_inputs();
        kv.set("esmda.alphas", "9.333333333333334,7,4,2", None).unwrap();
        kv.set("localization.theta", "30", None).unwrap();
        kv.set("truncate.kinds", "water_rate,oil_rate", None).unwrap();
        let cfg = RunConfig::from_key_values(&kv).unwrap();
        let text = cfg.manifest(&["timing 1.0 s".into()]);
        let again = RunConfig::from_key_values(&KeyValues::parse(&text, None, "manifest").unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.manifest(&[]), cfg.manifest(&[]));
    }
}
