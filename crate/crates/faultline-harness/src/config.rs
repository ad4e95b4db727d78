//! TOML configuration for pipelines and campaigns.
//!
//! A pipeline file declares states, routing, and relations. A
//! campaign file points at a pipeline file and adds the dataset, the
//! perturbation set, and the mock components wired to the pipeline's
//! component names. See the repository README for complete examples.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use faultline_core::metamorphic::{CompositeRelation, MetamorphicRelation};
use faultline_core::mocks::{FaultProfile, MockClassifier, MockDetector, MockOcr, Passthrough};
use faultline_core::payload::{Detection, PayloadKind};
use faultline_core::perturb::{PerturbationSet, PerturbationSpec};
use faultline_core::pipeline::{
    ComponentFunction, ComponentRegistry, PipelineSpec, Projection, RouteClause, RoutePredicate,
    RouteTarget, ShapeSpec, StateDecl, StateId,
};
use serde::Deserialize;

use crate::campaign::CampaignPlan;
use crate::dataset::{self, SyntheticKind};
use crate::error::{HarnessError, Result};

/// On-disk pipeline declaration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineFile {
    pub pipeline: PipelineHeader,
    #[serde(default)]
    pub states: Vec<StateConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineHeader {
    pub initial: String,
    #[serde(default)]
    pub terminals: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub id: String,
    pub component: String,
    pub in_kind: PayloadKind,
    #[serde(default)]
    pub in_dims: Vec<usize>,
    pub out_kind: PayloadKind,
    #[serde(default)]
    pub out_dims: Vec<usize>,
    #[serde(default)]
    pub routes: Vec<RouteConfig>,
    #[serde(default)]
    pub relations: Vec<MetamorphicRelation>,
}

/// One routing clause. At most one predicate field may be set;
/// setting neither routes unconditionally.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    #[serde(default)]
    pub label_in: Option<Vec<String>>,
    #[serde(default)]
    pub confidence_at_least: Option<f64>,
    pub to: Vec<TargetConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub state: String,
    #[serde(default)]
    pub project: Option<ProjectConfig>,
}

/// Either the string `"identity"` or a `{ crop = N }` table.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ProjectConfig {
    Named(String),
    Crop { crop: usize },
}

/// On-disk campaign declaration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub campaign: CampaignHeader,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub perturbations: Vec<PerturbationSpec>,
    #[serde(default)]
    pub components: Vec<ComponentConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignHeader {
    /// Pipeline file path, relative to the campaign file.
    pub pipeline: String,
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_out")]
    pub out: String,
}

fn default_jobs() -> usize {
    1
}

fn default_out() -> String {
    "faultline-out".into()
}

/// Either synthesized inputs or explicit text items.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DatasetConfig {
    Synthetic { kind: SyntheticKind, count: usize, len: usize },
    Texts { texts: Vec<String> },
}

/// Mock component declarations, keyed to pipeline component names.
#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComponentConfig {
    Detector {
        name: String,
        #[serde(default)]
        detections: Vec<Detection>,
        #[serde(default)]
        fault: Option<FaultProfile>,
    },
    Classifier {
        name: String,
        vocab: Vec<String>,
        #[serde(default)]
        fault: Option<FaultProfile>,
    },
    TextReader {
        name: String,
        texts: Vec<String>,
        #[serde(default)]
        fault: Option<FaultProfile>,
    },
    Passthrough {
        name: String,
    },
}

impl ComponentConfig {
    pub fn name(&self) -> &str {
        match self {
            ComponentConfig::Detector { name, .. }
            | ComponentConfig::Classifier { name, .. }
            | ComponentConfig::TextReader { name, .. }
            | ComponentConfig::Passthrough { name } => name,
        }
    }
}

/// Settings that live beside the plan rather than inside it.
#[derive(Debug, Clone)]
pub struct CampaignSettings {
    pub out: PathBuf,
}

fn shape(kind: PayloadKind, dims: &[usize]) -> ShapeSpec {
    if dims.is_empty() {
        ShapeSpec::any(kind)
    } else {
        ShapeSpec::with_dims(kind, dims.to_vec())
    }
}

fn convert_route(state_id: &str, route: &RouteConfig) -> Result<RouteClause> {
    let predicate = match (&route.label_in, &route.confidence_at_least) {
        (Some(_), Some(_)) => {
            return Err(HarnessError::Config(format!(
                "state {state_id}: route sets both label_in and confidence_at_least"
            )))
        }
        (Some(labels), None) => {
            RoutePredicate::LabelIn(labels.iter().cloned().collect::<BTreeSet<_>>())
        }
        (None, Some(floor)) => RoutePredicate::ConfidenceAtLeast(*floor),
        (None, None) => RoutePredicate::Always,
    };
    let mut targets = Vec::with_capacity(route.to.len());
    for target in &route.to {
        let projection = match &target.project {
            None => Projection::Identity,
            Some(ProjectConfig::Named(name)) if name == "identity" => Projection::Identity,
            Some(ProjectConfig::Named(name)) => {
                return Err(HarnessError::Config(format!(
                    "state {state_id}: unknown projection {name:?}"
                )))
            }
            Some(ProjectConfig::Crop { crop }) => Projection::Crop { len: *crop },
        };
        targets.push(RouteTarget { state: StateId::new(target.state.clone()), projection });
    }
    Ok(RouteClause { predicate, targets })
}

/// Lowers the file schema to the executable pipeline declaration.
pub fn to_pipeline_spec(file: &PipelineFile) -> Result<PipelineSpec> {
    let mut states = Vec::with_capacity(file.states.len());
    for config in &file.states {
        let routing: Vec<RouteClause> = config
            .routes
            .iter()
            .map(|r| convert_route(&config.id, r))
            .collect::<Result<_>>()?;
        let relations = (!config.relations.is_empty())
            .then(|| CompositeRelation { relations: config.relations.clone() });
        states.push(StateDecl {
            id: StateId::new(config.id.clone()),
            function: ComponentFunction {
                component: config.component.clone(),
                in_shape: shape(config.in_kind, &config.in_dims),
                out_shape: shape(config.out_kind, &config.out_dims),
            },
            routing,
            relations,
        });
    }
    Ok(PipelineSpec {
        states,
        initial: StateId::new(file.pipeline.initial.clone()),
        terminals: file.pipeline.terminals.iter().map(|t| StateId::new(t.clone())).collect(),
    })
}

/// Builds the component registry from mock declarations.
pub fn build_registry(components: &[ComponentConfig]) -> Result<ComponentRegistry> {
    let mut registry = ComponentRegistry::new();
    for config in components {
        match config {
            ComponentConfig::Detector { name, detections, fault } => {
                let mock = MockDetector::new(name.clone(), detections.clone(), fault.clone())?;
                registry.register(name.clone(), Arc::new(mock))?;
            }
            ComponentConfig::Classifier { name, vocab, fault } => {
                let mock = MockClassifier::new(name.clone(), vocab.clone(), fault.clone())?;
                registry.register(name.clone(), Arc::new(mock))?;
            }
            ComponentConfig::TextReader { name, texts, fault } => {
                let mock = MockOcr::new(name.clone(), texts.clone(), fault.clone())?;
                registry.register(name.clone(), Arc::new(mock))?;
            }
            ComponentConfig::Passthrough { name } => {
                registry.register(name.clone(), Arc::new(Passthrough))?;
            }
        }
    }
    Ok(registry)
}

/// Loads a standalone pipeline file.
pub fn load_pipeline_file(path: &Path) -> Result<PipelineSpec> {
    let text = fs::read_to_string(path)?;
    let file: PipelineFile = toml::from_str(&text)?;
    to_pipeline_spec(&file)
}

/// Loads a campaign file and everything it references.
///
/// CLI overrides for seed, jobs, and output directory are applied
/// here so the returned plan is final.
pub fn load_campaign(
    path: &Path,
    seed_override: Option<u64>,
    jobs_override: Option<usize>,
    out_override: Option<PathBuf>,
) -> Result<(CampaignPlan, CampaignSettings)> {
    let text = fs::read_to_string(path)?;
    let file: CampaignFile = toml::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let pipeline = load_pipeline_file(&base.join(&file.campaign.pipeline))?;
    let registry = build_registry(&file.components)?;
    let seed = seed_override.unwrap_or(file.campaign.seed);
    let dataset = match &file.dataset {
        DatasetConfig::Synthetic { kind, count, len } => {
            dataset::synthetic(*kind, *count, *len, seed)?
        }
        DatasetConfig::Texts { texts } => dataset::from_texts(texts),
    };
    let plan = CampaignPlan {
        pipeline,
        registry,
        dataset,
        perturbations: PerturbationSet::new(file.perturbations.clone()),
        seed,
        jobs: jobs_override.unwrap_or(file.campaign.jobs),
    };
    let out = out_override.unwrap_or_else(|| base.join(&file.campaign.out));
    Ok((plan, CampaignSettings { out }))
}

/// Whether a TOML file is a campaign or a bare pipeline declaration.
pub fn sniff_kind(path: &Path) -> Result<FileKind> {
    let text = fs::read_to_string(path)?;
    let value: toml::Value = toml::from_str(&text)?;
    let table = value
        .as_table()
        .ok_or_else(|| HarnessError::Config("top level must be a table".into()))?;
    if table.contains_key("campaign") {
        Ok(FileKind::Campaign)
    } else if table.contains_key("pipeline") {
        Ok(FileKind::Pipeline)
    } else {
        Err(HarnessError::Config(
            "file declares neither [campaign] nor [pipeline]".into(),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Campaign,
    Pipeline,
}

#[cfg(test)]
mod tests {
    use super::*;
    use faultline_core::metamorphic::RelationSpec;

    const PIPELINE_TOML: &str = r#"
[pipeline]
initial = "q0"
terminals = ["q1"]

[[states]]
id = "q0"
component = "det"
in_kind = "tensor"
in_dims = [8]
out_kind = "detection_set"

[[states.relations]]
id = "subset"
extractor = "detection_subset"
iou_floor = 0.5

[[states.routes]]
label_in = ["sign"]

[[states.routes.to]]
state = "q1"
project = { crop = 4 }

[[states]]
id = "q1"
component = "cls"
in_kind = "tensor"
in_dims = [4]
out_kind = "label"

[[states.relations]]
id = "label-stable"
extractor = "label_match"
"#;

    #[test]
    fn pipeline_files_lower_to_specs() {
        let file: PipelineFile = toml::from_str(PIPELINE_TOML).unwrap();
        let spec = to_pipeline_spec(&file).unwrap();
        assert_eq!(spec.states.len(), 2);
        assert_eq!(spec.initial, StateId::new("q0"));
        assert!(spec.terminals.contains(&StateId::new("q1")));
        let q0 = spec.state(&StateId::new("q0")).unwrap();
        assert_eq!(q0.routing.len(), 1);
        assert_eq!(
            q0.routing[0].targets[0].projection,
            Projection::Crop { len: 4 }
        );
        let relations = q0.relations.as_ref().unwrap();
        assert!(matches!(
            relations.relations[0].spec,
            RelationSpec::DetectionSubset { iou_floor } if iou_floor == 0.5
        ));
    }

    #[test]
    fn conflicting_route_predicates_are_rejected() {
        let route = RouteConfig {
            label_in: Some(vec!["a".into()]),
            confidence_at_least: Some(0.5),
            to: vec![TargetConfig { state: "q1".into(), project: None }],
        };
        assert!(convert_route("q0", &route).is_err());
    }

    #[test]
    fn unknown_projection_names_are_rejected() {
        let route = RouteConfig {
            label_in: None,
            confidence_at_least: None,
            to: vec![TargetConfig {
                state: "q1".into(),
                project: Some(ProjectConfig::Named("mirror".into())),
            }],
        };
        assert!(convert_route("q0", &route).is_err());
    }

    #[test]
    fn campaign_files_load_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pipeline.toml"), PIPELINE_TOML).unwrap();
        let campaign = r#"
[campaign]
pipeline = "pipeline.toml"
seed = 11

[dataset]
kind = "tensor"
count = 3
len = 8

[[perturbations]]
id = "g1"
kind = "gaussian_noise"
severity = 2
seed = 5

[[components]]
type = "detector"
name = "det"

[[components.detections]]
x = 10.0
y = 10.0
w = 24.0
h = 24.0
class = "sign"
confidence = 0.95

[components.fault]
probability = 0.5

[components.fault.trigger]
min_severity = 2

[components.fault.effect]
type = "shift_boxes"
dx = 3.0
dy = 0.0

[[components]]
type = "classifier"
name = "cls"
vocab = ["stop", "go"]
"#;
        let campaign_path = dir.path().join("campaign.toml");
        std::fs::write(&campaign_path, campaign).unwrap();
        let (plan, settings) = load_campaign(&campaign_path, None, Some(2), None).unwrap();
        assert_eq!(plan.seed, 11);
        assert_eq!(plan.jobs, 2);
        assert_eq!(plan.dataset.len(), 3);
        assert_eq!(plan.perturbations.specs.len(), 1);
        assert!(plan.registry.contains("det") && plan.registry.contains("cls"));
        assert_eq!(settings.out, dir.path().join("faultline-out"));
        assert_eq!(sniff_kind(&campaign_path).unwrap(), FileKind::Campaign);
        assert_eq!(
            sniff_kind(&dir.path().join("pipeline.toml")).unwrap(),
            FileKind::Pipeline
        );
    }
}
