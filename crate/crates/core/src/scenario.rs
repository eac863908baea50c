//! Scenario files: TOML (or the JSON the runner writes back), with
//! `key=value` overrides and validation that names the offending field.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::armsrace::Scenario;
use crate::censor::{CostMatrix, Strategy, TrainingParams};
use crate::economics::EconomyConfig;
use crate::error::{Error, Result};
use crate::evader::{preset_tool, FeatureTransform, Preset, ProbeBehavior, Tool};
use crate::eval::{AccuracyDemand, DEFAULT_EPSILON};
use crate::traffic::{FeatureCatalog, ProbeId, TrafficSpec};

/// Names of the scenarios shipped with the crate.
pub const STOCK: [&str; 4] = [
    "figure1-polymorphism",
    "figure2-steganography",
    "blacklist-poly-vs-steg",
    "tool-reeval",
];

/// TOML text of a stock scenario.
pub fn stock(name: &str) -> Option<&'static str> {
    Some(match name {
        "figure1-polymorphism" => include_str!("../scenarios/figure1-polymorphism.toml"),
        "figure2-steganography" => include_str!("../scenarios/figure2-steganography.toml"),
        "blacklist-poly-vs-steg" => include_str!("../scenarios/blacklist-poly-vs-steg.toml"),
        "tool-reeval" => include_str!("../scenarios/tool-reeval.toml"),
        _ => return None,
    })
}

/// A tool entry: a preset, explicit transforms, or a preset with changes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Replaces the preset's transforms when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transforms: Option<Vec<FeatureTransform>>,
    /// Added to (and overriding) the preset's per-probe policy.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub probe_policy: BTreeMap<ProbeId, ProbeBehavior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_probe_behavior: Option<ProbeBehavior>,
}

impl ToolDecl {
    pub fn resolve(&self, id: &str) -> Tool {
        let mut tool = self.preset.map(preset_tool).unwrap_or_else(|| Tool::identity(id));
        tool.id = id.to_owned();
        if let Some(t) = &self.transforms {
            tool.transforms = t.clone();
        }
        tool.probe_policy.extend(self.probe_policy.clone());
        if let Some(b) = self.default_probe_behavior {
            tool.default_probe_behavior = b;
        }
        tool
    }

    fn from_tool(tool: &Tool) -> Self {
        ToolDecl {
            preset: None,
            transforms: Some(tool.transforms.clone()),
            probe_policy: tool.probe_policy.clone(),
            default_probe_behavior: Some(tool.default_probe_behavior),
        }
    }
}

fn default_training_fraction() -> f64 {
    0.5
}
fn default_bins() -> usize {
    TrainingParams::default().bins
}
fn default_alpha() -> f64 {
    TrainingParams::default().alpha
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub seed: u64,
    pub cycles: usize,
    #[serde(default = "default_training_fraction")]
    pub training_fraction: f64,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub frozen_classifier: bool,
    /// Obfuscation threshold slack.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub traffic: TrafficSpec,
    pub catalog: FeatureCatalog,
    pub economy: EconomyConfig,
    pub cost_matrix: CostMatrix,
    pub tools: BTreeMap<String, ToolDecl>,
    /// Tool ids, one per cycle; the last repeats.
    pub schedule: Vec<String>,
    pub demand: AccuracyDemand,
}

impl ScenarioFile {
    /// Parses `text` (TOML, or JSON when `json` is set), applies
    /// `overrides` (`dotted.key=value`), and validates the result.
    pub fn parse(text: &str, json: bool, overrides: &[String]) -> Result<Self> {
        let mut value: Value = if json {
            serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_owned()))?
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let file: ScenarioFile = serde_path_to_error::deserialize(value).map_err(|e| {
            let mut field = e.path().to_string();
            let message = e.inner().to_string();
            if let Some(missing) = message
                .strip_prefix("missing field `")
                .and_then(|m| m.split('`').next())
            {
                field = if field == "." {
                    missing.to_owned()
                } else {
                    format!("{field}.{missing}")
                };
            }
            Error::Config { field, message }
        })?;
        file.validate()?;
        Ok(file)
    }

    /// Loads a scenario file, or a stock scenario when `source` names one
    /// and no such file exists.
    pub fn load(source: &str, overrides: &[String]) -> Result<Self> {
        let path = Path::new(source);
        if !path.exists() {
            if let Some(text) = stock(source) {
                return ScenarioFile::parse(text, false, overrides);
            }
        }
        let text = std::fs::read_to_string(path)?;
        let json = path.extension().is_some_and(|e| e == "json");
        ScenarioFile::parse(&text, json, overrides)
    }

    pub fn tool(&self, id: &str) -> Result<Tool> {
        self.tools
            .get(id)
            .map(|d| d.resolve(id))
            .ok_or_else(|| Error::config(format!("tools.{id}"), "unknown tool"))
    }

    /// All declared tools in id order.
    pub fn all_tools(&self) -> Vec<Tool> {
        self.tools.iter().map(|(id, d)| d.resolve(id)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.epsilon) {
            return Err(Error::config("epsilon", "must lie in [0, 0.5]"));
        }
        self.demand.validate("demand")?;
        for (i, id) in self.schedule.iter().enumerate() {
            if !self.tools.contains_key(id) {
                return Err(Error::config(format!("schedule[{i}]"), format!("unknown tool `{id}`")));
            }
        }
        for (id, decl) in &self.tools {
            for probe in decl.resolve(id).probe_policy.keys() {
                if self.traffic.probe(probe).is_none() {
                    return Err(Error::config(
                        format!("tools.{id}.probe_policy.{probe}"),
                        "probe is not declared in traffic.probes",
                    ));
                }
            }
        }
        self.scenario_unchecked().validate()
    }

    fn scenario_unchecked(&self) -> Scenario {
        Scenario {
            name: self.name.clone(),
            traffic: self.traffic.clone().with_seed(self.seed),
            catalog: self.catalog.clone(),
            cost_matrix: self.cost_matrix,
            econ: self.economy.clone(),
            tool_schedule: self.schedule.iter().filter_map(|id| self.tool(id).ok()).collect(),
            n_cycles: self.cycles,
            training_fraction: self.training_fraction,
            strategy: self.strategy,
            params: TrainingParams {
                bins: self.bins,
                alpha: self.alpha,
            },
            frozen_classifier: self.frozen_classifier,
            seed: self.seed,
        }
    }

    /// The runtime scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        self.validate()?;
        Ok(self.scenario_unchecked())
    }

    /// The same scenario with every tool spelled out, as written to
    /// `scenario.json`.
    pub fn resolved(&self) -> ScenarioFile {
        let mut out = self.clone();
        out.tools = self
            .tools
            .iter()
            .map(|(id, d)| (id.clone(), ToolDecl::from_tool(&d.resolve(id))))
            .collect();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sets `key=value` in `root`. The value is read as a TOML literal, and as
/// a plain string when it is not one.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must have the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::config(spec, "override key is empty"));
    }
    let literal: Value = toml::from_str::<BTreeMap<String, Value>>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut m| m.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()));

    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*part).to_owned(), literal);
                    return Ok(());
                }
                map.entry(*part).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(key, format!("index {idx} out of range ({len} entries)")))?;
                if last {
                    *slot = literal;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(key, format!("`{}` is not a table", parts[..i].join(".")))),
        };
    }
    unreachable!("split yields at least one part")
}
