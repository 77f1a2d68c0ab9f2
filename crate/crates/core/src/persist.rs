//! Versioned JSON model files.
//!
//! Reals are written in their shortest exactly-round-tripping decimal form,
//! so `load(save(m))` reproduces every parameter bit for bit.

use crate::dataset::{MinMaxScaler, Scaling, TargetScaler};
use crate::model::{Antecedent, Consequent, Mode, Rule, RuleBase, RuleBaseError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("cannot access `{path}`")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format_version {found} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("model file schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    InvalidRuleBase(#[from] RuleBaseError),
}

/// A trained rule base together with the scalers it was fitted under.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub rulebase: RuleBase,
    pub scaling: Scaling,
    pub feature_names: Vec<String>,
    pub target_name: Option<String>,
    pub seed: Option<u64>,
}

impl TrainedModel {
    pub fn predict_raw(&self, raw: &[f64]) -> crate::inference::IntervalPrediction {
        let x = self.scaling.normalize_features(raw);
        crate::inference::predict_one(&self.rulebase, &x).map(|v| self.scaling.target.inverse(v))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    c1: Vec<f64>,
    c2: Vec<f64>,
    sigma: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    mode: Mode,
    q: f64,
    #[serde(rename = "F")]
    n_features: usize,
    #[serde(rename = "R")]
    n_rules: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    feature_scalers: Vec<MinMaxScaler>,
    target_scaler: TargetScaler,
    rules: Vec<RuleRecord>,
}

pub fn to_json(model: &TrainedModel) -> String {
    let rb = &model.rulebase;
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        mode: rb.mode,
        q: rb.q,
        n_features: rb.n_features(),
        n_rules: rb.n_rules(),
        feature_names: model.feature_names.clone(),
        target_name: model.target_name.clone(),
        seed: model.seed,
        feature_scalers: model.scaling.features.clone(),
        target_scaler: model.scaling.target,
        rules: rb
            .rules
            .iter()
            .map(|r| RuleRecord {
                c1: r.antecedents.iter().map(|a| a.c1).collect(),
                c2: r.antecedents.iter().map(|a| a.c2).collect(),
                sigma: r.antecedents.iter().map(|a| a.sigma).collect(),
                w: r.consequent.w.clone(),
                b: r.consequent.b,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model document serialises")
}

pub fn from_json(text: &str) -> Result<TrainedModel, PersistError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(found) => return Err(PersistError::UnsupportedVersion { found }),
        None => return Err(PersistError::Schema("missing format_version".into())),
    }
    let doc: ModelDoc = serde_json::from_value(value)?;
    let schema = |m: String| Err(PersistError::Schema(m));

    if doc.rules.len() != doc.n_rules {
        return schema(format!(
            "header declares R = {} but file has {} rules",
            doc.n_rules,
            doc.rules.len()
        ));
    }
    let f = doc.n_features;
    if doc.feature_scalers.len() != f {
        return schema(format!(
            "expected {f} feature scalers, found {}",
            doc.feature_scalers.len()
        ));
    }
    if !doc.feature_names.is_empty() && doc.feature_names.len() != f {
        return schema(format!(
            "expected {f} feature names, found {}",
            doc.feature_names.len()
        ));
    }
    if !(doc.target_scaler.std > 0.0) {
        return schema("target_scaler.std must be positive".into());
    }
    if doc.feature_scalers.iter().any(|s| !(s.max > s.min)) {
        return schema("feature scaler with max <= min".into());
    }
    let mut rules = Vec::with_capacity(doc.rules.len());
    for (j, r) in doc.rules.into_iter().enumerate() {
        for (name, len) in [
            ("c1", r.c1.len()),
            ("c2", r.c2.len()),
            ("sigma", r.sigma.len()),
            ("w", r.w.len()),
        ] {
            if len != f {
                return schema(format!(
                    "rule {j}: `{name}` has {len} entries, expected {f}"
                ));
            }
        }
        let antecedents = (0..f)
            .map(|k| Antecedent::new(r.c1[k], r.c2[k], r.sigma[k]))
            .collect();
        rules.push(Rule {
            antecedents,
            consequent: Consequent { w: r.w, b: r.b },
        });
    }
    let rulebase = RuleBase {
        rules,
        q: doc.q,
        mode: doc.mode,
    };
    rulebase.validate()?;
    let feature_names = if doc.feature_names.is_empty() {
        (1..=f).map(|i| format!("x{i}")).collect()
    } else {
        doc.feature_names
    };
    Ok(TrainedModel {
        rulebase,
        scaling: Scaling {
            features: doc.feature_scalers,
            target: doc.target_scaler,
        },
        feature_names,
        target_name: doc.target_name,
        seed: doc.seed,
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<(), PersistError> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model)).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, PersistError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text)
}
