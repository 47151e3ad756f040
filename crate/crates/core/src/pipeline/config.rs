use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cl::ClConfig;
use crate::constraints::{ConstraintSet, ConstraintSpec, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::final_trainer::SceConfig;
use crate::flow::features::default_constraints;
use crate::flow::{FeatureConfig, Schema};
use crate::ssl::{AeConfig, TabclConfig};
use crate::synth::SynthConfig;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "FLOWSSL_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generate a labeled fixture from the `synth` section.
    Synth,
    /// Read the CSV files (or captures) named in `paths`.
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub source: DataSource,
    pub output_dir: PathBuf,
    /// Labeled seed flows (CSV with a `label` column, raw units).
    pub seed_set: Option<PathBuf>,
    /// Unlabeled flows as CSV; ignored when `captures` is non-empty.
    pub unlabeled: Option<PathBuf>,
    /// Captures to extract the unlabeled flows from.
    pub captures: Vec<PathBuf>,
    /// Labeled evaluation flows.
    pub test: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth,
            output_dir: PathBuf::from("flowssl_out"),
            seed_set: None,
            unlabeled: None,
            captures: Vec::new(),
            test: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintsConfig {
    /// Weight of each default rule.
    pub phi: f64,
    pub delta: f64,
    /// Explicit rules; the default ratio rules are used when absent.
    pub rules: Option<Vec<ConstraintSpec>>,
}

impl Default for ConstraintsConfig {
    fn default() -> Self {
        Self {
            phi: 0.5,
            delta: DEFAULT_DELTA,
            rules: None,
        }
    }
}

impl ConstraintsConfig {
    /// Resolve against a schema. Default rules whose columns are missing are
    /// dropped with a warning; explicit rules must resolve.
    pub fn build(&self, schema: &Schema) -> Result<ConstraintSet> {
        let names = schema.continuous_names();
        let specs = match &self.rules {
            Some(r) => r.clone(),
            None => default_constraints(self.phi)
                .into_iter()
                .filter(|s| {
                    let ok = [&s.a, &s.b, &s.c].iter().all(|n| names.contains(n));
                    if !ok {
                        log::warn!("dropping default constraint on `{}`: a column is not selected", s.a);
                    }
                    ok
                })
                .collect(),
        };
        ConstraintSet::from_specs(&specs, &names, self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branches {
    Both,
    Ae,
    Tabcl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Which branches produce pseudo-labels; a single branch skips fusion.
    pub branches: Branches,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { branches: Branches::Both }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Display names; class indices are used when empty.
    pub class_names: Vec<String>,
    /// Also write gnuplot-style `.dat` files.
    pub write_dat: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            class_names: Vec::new(),
            write_dat: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Number of classes; inferred from the seed set when absent.
    pub classes: Option<usize>,
    pub paths: PathsConfig,
    pub features: FeatureConfig,
    pub constraints: ConstraintsConfig,
    pub ae: AeConfig,
    pub tabcl: TabclConfig,
    pub fusion: FusionConfig,
    pub cl: ClConfig,
    #[serde(rename = "final")]
    pub final_: SceConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            classes: None,
            paths: PathsConfig::default(),
            features: FeatureConfig::default(),
            constraints: ConstraintsConfig::default(),
            ae: AeConfig::default(),
            tabcl: TabclConfig::default(),
            fusion: FusionConfig::default(),
            cl: ClConfig::default(),
            final_: SceConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.timeouts()?;
        let schema = self.features.schema()?;
        self.constraints.build(&schema)?;
        self.ae.validate()?;
        self.tabcl.validate()?;
        self.cl.validate()?;
        self.final_.validate()?;
        if let Some(k) = self.classes {
            if k < 2 {
                return Err(Error::config("classes must be at least 2"));
            }
        }
        Ok(())
    }

    /// Load `path` (or the defaults) and apply `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let base = match path {
            Some(p) => {
                let text = crate::io::read_text(p)?;
                let cfg: PipelineConfig =
                    serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()).in_file(p))?;
                cfg
            }
            None => PipelineConfig::default(),
        };
        let cfg = base.with_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = serde_json::to_value(self).map_err(|e| Error::config(e.to_string()))?;
        for (key, value) in overrides {
            set_path(&mut tree, key, value)?;
        }
        serde_json::from_value(tree).map_err(|e| Error::config(format!("after overrides: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Set a dotted key in a JSON tree. The value is parsed as JSON and taken as a
/// plain string when that fails.
pub fn set_path(tree: &mut Value, key: &str, value: &str) -> Result<()> {
    let parsed = serde_json::from_str::<Value>(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("`{}` is not a section", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(Error::config(format!("unknown config key `{key}`")));
        }
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj.get_mut(*part).expect("checked above");
    }
    Err(Error::config("empty config key"))
}
