use anyhow::{bail, Result};
use catalysis_core::fitting::ModelKind;
use catalysis_core::potential::CatalysisParams;
use serde::{Deserialize, Serialize};

use crate::args::{ModelSource, Preset};
use crate::output::Run;

/// A model and its parameter vector, in [`ModelKind::parameter_names`] order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub model: ModelKind,
    pub params: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct ModelFile {
    #[serde(alias = "kind")]
    model: ModelKind,
    params: serde_json::Value,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let names = file.model.parameter_names();
        let params = match file.params {
            serde_json::Value::Array(_) => serde_json::from_value::<Vec<f64>>(file.params)?,
            serde_json::Value::Object(map) => {
                if let Some(unknown) = map.keys().find(|k| !names.contains(&k.as_str())) {
                    bail!("unknown parameter '{unknown}' for {} (expected {})", file.model, names.join(", "));
                }
                names
                    .iter()
                    .map(|n| match map.get(*n).and_then(|v| v.as_f64()) {
                        Some(v) => Ok(v),
                        None => bail!("missing numeric parameter '{n}' for {}", file.model),
                    })
                    .collect::<Result<_>>()?
            }
            _ => bail!("params must be an array or an object"),
        };
        if params.len() != names.len() {
            bail!("{} takes {} parameters, got {}", file.model, names.len(), params.len());
        }
        Ok(Self { model: file.model, params })
    }

    pub fn preset(preset: Preset) -> Self {
        let q = match preset {
            Preset::WorkedExample | Preset::WorkedExampleLinear => CatalysisParams::worked_example(),
            Preset::Bifurcation => {
                CatalysisParams { s: 1.0, w: 1.0, p_min: 0.1, p_mem: 0.4, p_max: 0.8, i_c: 1.0, i_max: 5.0, a: 0.0 }
            }
        };
        match preset {
            Preset::WorkedExampleLinear => {
                Self { model: ModelKind::LinearOde, params: vec![q.s, q.w, q.p_min, q.p_max, q.i_max, q.a] }
            }
            _ => Self {
                model: ModelKind::NonlinearCatalysis,
                params: vec![q.s, q.w, q.p_min, q.p_mem, q.p_max, q.i_c, q.i_max, q.a],
            },
        }
    }

    pub fn load(run: &mut Run, source: &ModelSource) -> Result<Self> {
        match (&source.params, source.preset) {
            (Some(path), _) => {
                let text = run.read(path)?;
                Self::from_json(&text).map_err(|e| e.context(format!("reading model file {}", path.display())))
            }
            (None, Some(p)) => Ok(Self::preset(p)),
            (None, None) => unreachable!("clap requires one model source"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_and_positional_forms_agree() {
        let named =
            ModelSpec::from_json(r#"{"model": "threshold", "params": {"p_min": 0.01, "i_c": 0.3, "p_mem": 0.2}}"#)
                .unwrap();
        let positional =
            ModelSpec::from_json(r#"{"kind": "threshold", "params": [0.3, 0.2, 0.01], "nll": 4.0}"#).unwrap();
        assert_eq!(named, positional);
    }

    #[test]
    fn rejects_wrong_parameters() {
        assert!(ModelSpec::from_json(r#"{"model": "constant_p", "params": [0.1, 0.2]}"#).is_err());
        assert!(ModelSpec::from_json(r#"{"model": "constant_p", "params": {"q": 0.1}}"#).is_err());
        assert!(ModelSpec::from_json(r#"{"model": "constant_p", "params": {}}"#).is_err());
        assert!(ModelSpec::from_json(r#"{"model": "nope", "params": []}"#).is_err());
    }

    #[test]
    fn presets_have_full_vectors() {
        for p in [Preset::WorkedExample, Preset::WorkedExampleLinear, Preset::Bifurcation] {
            let spec = ModelSpec::preset(p);
            assert_eq!(spec.params.len(), spec.model.k_params());
        }
    }
}
