//! Experiment configuration.
//!
//! A config is a TOML document with one required block and several optional
//! ones:
//!
//! ```toml
//! suites = ["check-lemmas", "simulate"]   # used by `lrex run`
//!
//! [kernel]                 # required
//! family = "power_law"     # or "nearest_neighbor", "explicit"
//! beta = 3.0
//! zmax = 8
//!
//! [sim]
//! n = 64                   # or n_list = [16, 32, 64]
//! length = 4               # macroscopic torus length L
//! b = 1.0
//! t_max = 1.0
//! checkpoints = [0.0, 0.5, 1.0]
//!
//! [fields]
//! observable = "f"
//! eps_list = [0.125, 0.25]
//! ell_list = [4, 8, 16, 32]
//! [[fields.test_functions]]
//! name = "f"
//! family = "gaussian"
//! center = 2.0
//! width = 0.4
//!
//! [run]
//! replicas = 100
//! threads = 1
//! master_seed = 0
//! out = "out"
//!
//! [enumeration]
//! sites = 12
//! trials = 1000
//! zmax = 5
//!
//! [sbe]
//! M = 256
//! dt = 1e-4
//! t_max = 1.0
//! b = 0.0
//! eps_list = [0.25, 0.125]
//! ```
//!
//! The density is fixed at 1/2. `sigma2` and `m` in `[sbe]` default to the
//! moments of the kernel.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use lrex::kernel::{KernelSpec, RateKernel};
use lrex::testfn::{TestFamily, TestFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key path of the offending entry.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    ValidateKernel,
    Simulate,
    CheckLemmas,
    BgPrinciple,
    Sbe,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub n: Option<u64>,
    pub n_list: Option<Vec<u64>>,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one")]
    pub t_max: f64,
    pub checkpoints: Option<Vec<f64>>,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            n: None,
            n_list: None,
            length: default_length(),
            b: 0.0,
            t_max: 1.0,
            checkpoints: None,
        }
    }
}

impl SimBlock {
    /// Refinement levels, ascending; a single `n` when no list is given.
    pub fn n_values(&self) -> Vec<u64> {
        match (&self.n_list, self.n) {
            (Some(list), _) => list.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => vec![64],
        }
    }

    /// The level used by single-`n` suites: `n`, else the finest of `n_list`.
    pub fn main_n(&self) -> u64 {
        self.n.unwrap_or_else(|| *self.n_values().last().unwrap())
    }

    /// Checkpoints, always including 0 and `t_max`.
    pub fn checkpoint_times(&self) -> Vec<f64> {
        let mut cps = self.checkpoints.clone().unwrap_or_default();
        cps.push(0.0);
        cps.push(self.t_max);
        cps.sort_by(f64::total_cmp);
        cps.dedup();
        cps
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct NamedTestFunction {
    pub name: String,
    #[serde(flatten)]
    pub family: TestFamily,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsBlock {
    #[serde(default = "default_test_functions")]
    pub test_functions: Vec<NamedTestFunction>,
    pub observable: Option<String>,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    #[serde(default = "default_ells")]
    pub ell_list: Vec<usize>,
}

impl Default for FieldsBlock {
    fn default() -> Self {
        Self {
            test_functions: default_test_functions(),
            observable: None,
            eps_list: vec![],
            ell_list: default_ells(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "one_usize")]
    pub threads: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            replicas: default_replicas(),
            threads: 1,
            master_seed: 0,
            out: default_out(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerationBlock {
    #[serde(default = "default_sites")]
    pub sites: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_zmax")]
    pub zmax: usize,
    #[serde(default = "default_appendix_n")]
    pub appendix_n: Vec<u64>,
}

impl Default for EnumerationBlock {
    fn default() -> Self {
        Self {
            sites: default_sites(),
            trials: default_trials(),
            zmax: default_zmax(),
            appendix_n: default_appendix_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbeBlock {
    #[serde(rename = "M", default = "default_points")]
    pub points: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub t_max: f64,
    #[serde(default)]
    pub b: f64,
    pub sigma2: Option<f64>,
    pub m: Option<f64>,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    /// Solver replicas; defaults to `run.replicas`.
    pub replicas: Option<usize>,
    /// Steps between recorded times.
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default = "yes")]
    pub dealias: bool,
    /// Write the per-replica mode power at `t_max`.
    #[serde(default)]
    pub snapshots: bool,
}

impl Default for SbeBlock {
    fn default() -> Self {
        Self {
            points: default_points(),
            dt: default_dt(),
            t_max: 1.0,
            b: 0.0,
            sigma2: None,
            m: None,
            eps_list: vec![],
            replicas: None,
            record_every: default_record_every(),
            dealias: true,
            snapshots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub sim: SimBlock,
    pub fields: FieldsBlock,
    pub run: RunBlock,
    pub enumeration: EnumerationBlock,
    pub sbe: SbeBlock,
    pub suites: Vec<SuiteName>,
}

fn default_length() -> usize {
    4
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_replicas() -> usize {
    100
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_ells() -> Vec<usize> {
    vec![4, 8, 16, 32]
}
fn default_sites() -> usize {
    12
}
fn default_trials() -> usize {
    1000
}
fn default_zmax() -> usize {
    5
}
fn default_appendix_n() -> Vec<u64> {
    vec![32, 64, 128, 256]
}
fn default_points() -> usize {
    256
}
fn default_dt() -> f64 {
    1e-4
}
fn default_record_every() -> u64 {
    100
}
fn default_test_functions() -> Vec<NamedTestFunction> {
    vec![NamedTestFunction {
        name: "f".into(),
        family: TestFamily::Gaussian {
            center: 2.0,
            width: 0.4,
        },
    }]
}

fn block<T: DeserializeOwned + Default>(table: &toml::Table, key: &str) -> Result<T, ConfigError> {
    match table.get(key) {
        None => Ok(T::default()),
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| err(key, e.message().to_string())),
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| err("", e.message().to_string()))?;
        const KNOWN: [&str; 7] = ["kernel", "sim", "fields", "run", "enumeration", "sbe", "suites"];
        if let Some(k) = table.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(err(k, "unknown block"));
        }
        let kernel: KernelSpec = table
            .get("kernel")
            .ok_or_else(|| err("kernel", "missing required block"))?
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| err("kernel", e.message().to_string()))?;
        let suites = match table.get("suites") {
            None => vec![],
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| err("suites", e.message().to_string()))?,
        };
        let cfg = Self {
            kernel,
            sim: block(&table, "sim")?,
            fields: block(&table, "fields")?,
            run: block(&table, "run")?,
            enumeration: block(&table, "enumeration")?,
            sbe: block(&table, "sbe")?,
            suites,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let ns = self.sim.n_values();
        if ns.is_empty() {
            return Err(err("sim.n_list", "empty"));
        }
        if ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("sim.n_list", "must be strictly ascending"));
        }
        if self.run.replicas == 0 {
            return Err(err("run.replicas", "must be at least 1"));
        }
        if self.sbe.replicas == Some(0) {
            return Err(err("sbe.replicas", "must be at least 1"));
        }
        if self.fields.test_functions.is_empty() {
            return Err(err("fields.test_functions", "at least one test function is required"));
        }
        for (i, tf) in self.fields.test_functions.iter().enumerate() {
            if self.fields.test_functions[..i].iter().any(|o| o.name == tf.name) {
                return Err(err("fields.test_functions", format!("duplicate name `{}`", tf.name)));
            }
        }
        if let Some(name) = &self.fields.observable {
            if !self.fields.test_functions.iter().any(|t| &t.name == name) {
                return Err(err("fields.observable", format!("no test function named `{name}`")));
            }
        }
        // ell = 2 is tracked automatically and replaces exactly
        if self.fields.ell_list.iter().any(|&l| l < 3) {
            return Err(err("fields.ell_list", "block lengths must be at least 3"));
        }
        if self.fields.ell_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("fields.ell_list", "must be strictly ascending"));
        }
        if self.sbe.record_every == 0 {
            return Err(err("sbe.record_every", "must be positive"));
        }
        Ok(())
    }

    pub fn build_kernel(&self) -> Result<RateKernel, ConfigError> {
        self.kernel.build().map_err(|e| err("kernel", e.to_string()))
    }

    pub fn test_function(&self, name: &str) -> Result<TestFunction, ConfigError> {
        let tf = self
            .fields
            .test_functions
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| err("fields.test_functions", format!("no test function named `{name}`")))?;
        TestFunction::new(tf.family.clone(), self.sim.length as f64)
            .map_err(|e| err(&format!("fields.test_functions.{name}"), e.to_string()))
    }

    /// The test function the suites observe.
    pub fn observable(&self) -> Result<(String, TestFunction), ConfigError> {
        let name = self
            .fields
            .observable
            .clone()
            .unwrap_or_else(|| self.fields.test_functions[0].name.clone());
        let f = self.test_function(&name)?;
        Ok((name, f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse("[kernel]\nfamily = \"nearest_neighbor\"\n").unwrap();
        assert_eq!(cfg.sim.length, 4);
        assert_eq!(cfg.sim.n_values(), vec![64]);
        assert_eq!(cfg.sim.checkpoint_times(), vec![0.0, 1.0]);
        assert_eq!(cfg.observable().unwrap().0, "f");
        assert_eq!(cfg.sbe.points, 256);
    }

    #[test]
    fn missing_kernel_is_named() {
        let e = ExperimentConfig::parse("[sim]\nn = 32\n").unwrap_err();
        assert_eq!(e.path, "kernel");
    }

    #[test]
    fn schema_violations_carry_paths() {
        let base = "[kernel]\nfamily = \"nearest_neighbor\"\n";
        let cases = [
            ("[sim]\nn_list = [64, 32]\n", "sim.n_list"),
            ("[run]\nreplicas = 0\n", "run.replicas"),
            ("[fields]\nobservable = \"g\"\n", "fields.observable"),
            ("[sim]\nbogus = 1\n", "sim"),
            ("[extra]\n", "extra"),
            ("[fields]\nell_list = [2, 4]\n", "fields.ell_list"),
        ];
        for (tail, path) in cases {
            let e = ExperimentConfig::parse(&format!("{base}{tail}")).unwrap_err();
            assert_eq!(e.path, path, "{tail}");
        }
    }

    #[test]
    fn named_test_functions_resolve() {
        let cfg = ExperimentConfig::parse(
            r#"
            [kernel]
            family = "power_law"
            beta = 3.0
            zmax = 8
            [fields]
            observable = "h"
            [[fields.test_functions]]
            name = "g"
            family = "gaussian"
            center = 1.0
            width = 0.3
            [[fields.test_functions]]
            name = "h"
            family = "hermite"
            order = 1
            center = 2.0
            scale = 0.5
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.observable().unwrap().1.family(), TestFamily::Hermite { order: 1, .. }));
        assert!(cfg.build_kernel().is_ok());
    }
}
