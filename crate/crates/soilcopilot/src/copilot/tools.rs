//! The six copilot tools, their argument schemas and handlers.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};
use soilcopilot_core::knowledge::{Index, Topic};
use thiserror::Error;

use crate::store::{AgroStore, StoreError, DEFAULT_TILLAGE_YEAR};

pub const SOC_PREDICTION: &str = "soc_prediction";
pub const DROUGHT_CONDITIONS: &str = "drought_conditions";
pub const WILDFIRE_INCIDENTS: &str = "wildfire_incidents";
pub const CROP_TYPES_AND_YEARS: &str = "crop_types_and_years";
pub const TILLAGE_SCALE: &str = "tillage_scale";
pub const SUPPORT_ARGUMENTS: &str = "support_arguments";

pub const DEFAULT_SUPPORT_K: i64 = 3;
pub const MAX_SUPPORT_K: i64 = 10;

const TOPIC_NAMES: &[&str] = &["Drought", "Wildfire", "Crop", "Practices"];

/// Tool failure reported back to the model as a tool result.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{code}: {message}")]
pub struct ToolError {
    pub code: String,
    pub message: String,
}

impl ToolError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new("invalid_arguments", message)
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "code": self.code, "message": self.message } })
    }
}

impl From<StoreError> for ToolError {
    fn from(e: StoreError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    String,
    Integer { min: i64, max: i64 },
    Enum(&'static [&'static str]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
    pub description: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolSpec {
    pub name: String,
    pub title: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl ToolSpec {
    /// JSON Schema object for the arguments.
    pub fn parameters_schema(&self) -> Value {
        let mut props = Map::new();
        for p in &self.params {
            let mut s = match &p.kind {
                ParamKind::String => json!({ "type": "string" }),
                ParamKind::Integer { min, max } => json!({ "type": "integer", "minimum": min, "maximum": max }),
                ParamKind::Enum(values) => json!({ "type": "string", "enum": values }),
            };
            s["description"] = json!(p.description);
            props.insert(p.name.to_string(), s);
        }
        let required: Vec<&str> = self.params.iter().filter(|p| p.required).map(|p| p.name).collect();
        json!({ "type": "object", "properties": props, "required": required, "additionalProperties": false })
    }

    /// Checks `args` against the declared parameters and normalizes enum values.
    pub fn validate(&self, args: &Value) -> Result<Map<String, Value>, ToolError> {
        let obj = match args {
            Value::Object(o) => o,
            Value::Null if self.params.iter().all(|p| !p.required) => return Ok(Map::new()),
            other => {
                return Err(ToolError::invalid(format!(
                    "{} expects a JSON object of arguments, got {other}",
                    self.name
                )))
            }
        };
        if let Some(k) = obj.keys().find(|k| !self.params.iter().any(|p| p.name == k.as_str())) {
            return Err(ToolError::invalid(format!("{} has no parameter {k:?}", self.name)));
        }
        let mut out = Map::new();
        for p in &self.params {
            let v = match obj.get(p.name) {
                None | Some(Value::Null) if p.required => {
                    return Err(ToolError::invalid(format!("missing required parameter {:?}", p.name)))
                }
                None | Some(Value::Null) => continue,
                Some(v) => v,
            };
            let bad = |want: &str| ToolError::invalid(format!("parameter {:?} must be {want}, got {v}", p.name));
            let norm = match &p.kind {
                ParamKind::String => {
                    let s =
                        v.as_str().map(str::trim).filter(|s| !s.is_empty()).ok_or_else(|| bad("a non-empty string"))?;
                    Value::String(s.to_string())
                }
                ParamKind::Integer { min, max } => {
                    let n = v
                        .as_i64()
                        .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64))
                        .ok_or_else(|| bad("an integer"))?;
                    if n < *min || n > *max {
                        return Err(bad(&format!("between {min} and {max}")));
                    }
                    json!(n)
                }
                ParamKind::Enum(values) => {
                    let s = v.as_str().ok_or_else(|| bad("a string"))?;
                    let hit = values
                        .iter()
                        .find(|x| x.eq_ignore_ascii_case(s.trim()))
                        .ok_or_else(|| bad(&format!("one of {}", values.join(", "))))?;
                    Value::String(hit.to_string())
                }
            };
            out.insert(p.name.to_string(), norm);
        }
        Ok(out)
    }
}

type Handler = Box<dyn Fn(&Map<String, Value>) -> Result<Value, ToolError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tool {0:?} is already registered")]
pub struct DuplicateTool(pub String);

/// Named tools in registration order. Immutable once built.
#[derive(Default)]
pub struct ToolRegistry {
    tools: Vec<(ToolSpec, Handler)>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.tools.iter().map(|(s, _)| &s.name)).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, spec: ToolSpec, handler: F) -> Result<(), DuplicateTool>
    where
        F: Fn(&Map<String, Value>) -> Result<Value, ToolError> + Send + Sync + 'static,
    {
        if self.spec(&spec.name).is_some() {
            return Err(DuplicateTool(spec.name));
        }
        self.tools.push((spec, Box::new(handler)));
        Ok(())
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.iter().map(|(s, _)| s)
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.specs().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn invoke(&self, name: &str, args: &Value) -> Result<Value, ToolError> {
        let (spec, handler) = self
            .tools
            .iter()
            .find(|(s, _)| s.name == name)
            .ok_or_else(|| ToolError::new("unknown_tool", format!("no tool named {name:?}")))?;
        let args = spec.validate(args)?;
        handler(&args)
    }
}

fn county_param() -> ParamSpec {
    ParamSpec {
        name: "county",
        kind: ParamKind::String,
        required: true,
        description: "California county name, e.g. \"Merced\".",
    }
}

fn spec(name: &str, title: &str, description: &str, params: Vec<ParamSpec>) -> ToolSpec {
    ToolSpec { name: name.to_string(), title: title.to_string(), description: description.to_string(), params }
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> &'a str {
    args.get(key).and_then(Value::as_str).unwrap_or_default()
}

/// Registers the six tools over the store and, when present, the article index.
pub fn build_tool_registry(store: Arc<AgroStore>, index: Option<Arc<Index>>) -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    let s = store.clone();
    reg.register(
        spec(
            SOC_PREDICTION,
            "SOC Prediction",
            "Always use this tool to get the soil organic carbon prediction in 2016 and 2023 in a county.",
            vec![county_param()],
        ),
        move |a| {
            let p = s.soc_prediction(str_arg(a, "county"))?;
            Ok(json!({ "soc_2016_pct": p.soc_2016_pct, "soc_2023_pct": p.soc_2023_pct }))
        },
    )
    .expect("fresh registry");

    let s = store.clone();
    reg.register(
        spec(
            DROUGHT_CONDITIONS,
            "Drought Conditions",
            "Provides the drought conditions of a county.",
            vec![county_param()],
        ),
        move |a| {
            let c = s.county(str_arg(a, "county"))?;
            Ok(json!({ "county": c.county_name, "events": c.drought_events }))
        },
    )
    .expect("fresh registry");

    let s = store.clone();
    reg.register(
        spec(
            WILDFIRE_INCIDENTS,
            "Wildfire Incidents",
            "Provides the wildfire incidents that occurred in a county.",
            vec![county_param()],
        ),
        move |a| {
            let c = s.county(str_arg(a, "county"))?;
            Ok(json!({ "county": c.county_name, "incidents": c.wildfires }))
        },
    )
    .expect("fresh registry");

    let s = store.clone();
    reg.register(
        spec(
            CROP_TYPES_AND_YEARS,
            "Crop Types and Years",
            "Provides the crop types and corresponding years in a county.",
            vec![county_param()],
        ),
        move |a| {
            let county = str_arg(a, "county");
            let name = s.county(county)?.county_name.clone();
            Ok(json!({ "county": name, "years": s.crop_types(county)? }))
        },
    )
    .expect("fresh registry");

    let s = store;
    reg.register(
        spec(
            TILLAGE_SCALE,
            "Tillage Scale",
            "Provides the tillage in 2019 in a county on a scale of 0 to 1 where 0 is no till, 1 is conventional tilling.",
            vec![
                county_param(),
                ParamSpec {
                    name: "year",
                    kind: ParamKind::Integer { min: 1900, max: 2100 },
                    required: false,
                    description: "Survey year; defaults to 2019.",
                },
            ],
        ),
        move |a| {
            let county = str_arg(a, "county");
            let year = a.get("year").and_then(Value::as_i64).map_or(DEFAULT_TILLAGE_YEAR, |y| y as i32);
            let name = s.county(county)?.county_name.clone();
            Ok(json!({ "county": name, "year": year, "tillage_scale": s.tillage_scale(county, year)? }))
        },
    )
    .expect("fresh registry");

    reg.register(
        spec(
            SUPPORT_ARGUMENTS,
            "Support Arguments",
            "Use this tool to find arguments to support your hypothesis with topics related to wildfire, drought, agricultural practices, or crops.",
            vec![
                ParamSpec {
                    name: "query",
                    kind: ParamKind::String,
                    required: true,
                    description: "Hypothesis or keywords to search the article collection for.",
                },
                ParamSpec {
                    name: "topic",
                    kind: ParamKind::Enum(TOPIC_NAMES),
                    required: false,
                    description: "Restrict results to one topic.",
                },
                ParamSpec {
                    name: "k",
                    kind: ParamKind::Integer { min: 1, max: MAX_SUPPORT_K },
                    required: false,
                    description: "Number of passages to return; defaults to 3.",
                },
            ],
        ),
        move |a| {
            let index = index
                .as_ref()
                .ok_or_else(|| ToolError::new("no_corpus", "no article corpus is loaded"))?;
            let topic = match a.get("topic").and_then(Value::as_str) {
                Some(t) => Some(t.parse::<Topic>().map_err(|e| ToolError::invalid(e.to_string()))?),
                None => None,
            };
            let k = a.get("k").and_then(Value::as_i64).unwrap_or(DEFAULT_SUPPORT_K) as usize;
            let query = str_arg(a, "query");
            let hits = index
                .support_arguments(query, topic, k)
                .map_err(|e| ToolError::new("retrieval_error", e.to_string()))?;
            let hits: Vec<Value> = hits
                .into_iter()
                .map(|h| {
                    json!({
                        "doc_id": h.chunk.doc_id,
                        "chunk_index": h.chunk.chunk_index,
                        "title": h.title,
                        "topic": h.topic.as_str(),
                        "score": h.score,
                        "text": h.chunk.text,
                        "citation": h.citation,
                    })
                })
                .collect();
            Ok(json!({ "query": query, "topic": topic.map(Topic::as_str), "hits": hits }))
        },
    )
    .expect("fresh registry");
    reg
}
