use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use spectok::{ModelConfig, SpecConfig};

/// One experiment run. Every section is optional; `{}` runs the tiny
/// model with the defaults below.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "ModelConfig::tiny")]
    pub model: ModelConfig,
    /// Replaces `model.spec` when present.
    #[serde(default)]
    pub spec: Option<SpecConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub count: CountSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub gradcheck: GradCheckSection,
    #[serde(default)]
    pub ln_demo: LnDemoSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountSection {
    /// Image size for the FLOPs count; the model's when absent.
    #[serde(default)]
    pub image_size: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// `"synthetic"` or a directory of `.spti` files.
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default = "default_num_images")]
    pub num_images: usize,
    /// Weights to load instead of a fresh seeded init.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

fn default_source() -> String {
    "synthetic".into()
}
fn default_num_images() -> usize {
    4
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            source: default_source(),
            num_images: default_num_images(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_w_aux")]
    pub w_aux: f64,
    #[serde(default = "d_train_size")]
    pub train_size: usize,
    #[serde(default = "d_eval_size")]
    pub eval_size: usize,
    #[serde(default = "d_eval_every")]
    pub eval_every: usize,
}

fn d_steps() -> usize {
    300
}
fn d_batch() -> usize {
    16
}
fn d_lr() -> f64 {
    0.01
}
fn d_momentum() -> f64 {
    0.9
}
fn d_w_aux() -> f64 {
    0.1
}
fn d_train_size() -> usize {
    512
}
fn d_eval_size() -> usize {
    256
}
fn d_eval_every() -> usize {
    50
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: d_steps(),
            batch_size: d_batch(),
            lr: d_lr(),
            momentum: d_momentum(),
            w_aux: d_w_aux(),
            train_size: d_train_size(),
            eval_size: d_eval_size(),
            eval_every: d_eval_every(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckSection {
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_w_aux")]
    pub w_aux: f64,
    #[serde(default = "d_gc_batch")]
    pub batch: usize,
    #[serde(default = "d_tolerance")]
    pub tolerance: f64,
    /// Corrupts the analytic gradient; the check must then fail.
    #[serde(default)]
    pub inject_fault: bool,
}

fn d_eps() -> f64 {
    1e-5
}
fn d_gc_batch() -> usize {
    2
}
fn d_tolerance() -> f64 {
    1e-4
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            eps: d_eps(),
            w_aux: d_w_aux(),
            batch: d_gc_batch(),
            tolerance: d_tolerance(),
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LnDemoSection {
    #[serde(default = "d_demo_d")]
    pub d: usize,
    #[serde(default = "d_demo_patches")]
    pub n_patches: usize,
}

fn d_demo_d() -> usize {
    16
}
fn d_demo_patches() -> usize {
    8
}

impl Default for LnDemoSection {
    fn default() -> Self {
        Self {
            d: d_demo_d(),
            n_patches: d_demo_patches(),
        }
    }
}

/// A config problem, already formatted for the user.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sets `path` (dot-separated) in `root` to `raw`, read as JSON when it
/// parses and as a string otherwise. Missing objects along the way are
/// created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("--set {assignment}: expected key=value")))?;
    if path.is_empty() {
        return Err(ConfigError(format!("--set {assignment}: empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            _ => {
                return Err(ConfigError(format!(
                    "--set {path}: `{}` is not an object",
                    keys[..i].join(".")
                )))
            }
        };
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*key).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one key")
}

/// Replaces a missing `model` with the tiny preset and a string `model`
/// (`"tiny"` or `"vit_large"`) with the named preset, so `--set model.x=..`
/// always edits a complete config. Returns whether the document changed.
fn expand_model_preset(root: &mut Value) -> Result<bool, ConfigError> {
    let Value::Object(obj) = root else {
        return Err(ConfigError("the config must be a JSON object".into()));
    };
    let preset = match obj.get("model") {
        None => ModelConfig::tiny(),
        Some(Value::String(name)) => match name.as_str() {
            "tiny" => ModelConfig::tiny(),
            "vit_large" => ModelConfig::vit_large(),
            other => {
                return Err(ConfigError(format!(
                    "field `model`: unknown preset `{other}` (expected tiny or vit_large)"
                )))
            }
        },
        Some(_) => return Ok(false),
    };
    let value = serde_json::to_value(preset).expect("model config serializes");
    obj.insert("model".into(), value);
    Ok(true)
}

/// Parses a config document and applies `--set` overrides. Syntax errors
/// report line and column; schema errors report the field path.
pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| ConfigError(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    if !value.is_object() {
        return Err(ConfigError("the config must be a JSON object".into()));
    }
    let string_model = matches!(value.get("model"), Some(Value::String(_)));
    let preset = (string_model || !overrides.is_empty()) && expand_model_preset(&mut value)?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut cfg: RunConfig = if overrides.is_empty() && !preset {
        // Straight from the text so value errors keep their line numbers.
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            ConfigError(format!(
                "field `{}` (line {}): {inner}",
                e.path(),
                inner.line()
            ))
        })?
    } else {
        serde_path_to_error::deserialize(value)
            .map_err(|e| ConfigError(format!("field `{}`: {}", e.path(), e.inner())))?
    };
    if let Some(spec) = cfg.spec.take() {
        if !cfg.model.spec.is_empty() {
            return Err(ConfigError(
                "field `spec`: give the spec either at top level or under `model`, not both".into(),
            ));
        }
        cfg.model.spec = spec;
    }
    cfg.model
        .validate()
        .map_err(|e| ConfigError(format!("field `model`: {e}")))?;
    Ok(cfg)
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, overrides).map_err(|e| LoadError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug)]
pub enum LoadError {
    Io(String),
    Config(String),
}
