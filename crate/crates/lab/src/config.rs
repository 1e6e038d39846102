//! Experiment configuration: one JSON document per run.
//!
//! ```json
//! {
//!   "scenario": "eta_sweep",
//!   "seed": 0,
//!   "field": { "kind": "translation", "shift": [2.0, -1.0] },
//!   "params": { "etas": [0.0, 0.5, 1.0], "seeds": 10 }
//! }
//! ```
//!
//! `params` is scenario specific and may be omitted to take its defaults.
//! The README lists every key.

use std::path::{Path, PathBuf};

use dvrf_core::condfield::{Component, CondGmmField, Mixture};
use dvrf_core::editor::{EditConfig, OptimizerKind, TimestepKind};
use dvrf_core::integrate::ReconMode;
use dvrf_core::schedules::VpTable;
use dvrf_core::tasks::{BlockTask, TranslationTask};
use dvrf_core::{Prompt, Schedule, ShiftRule};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

pub const SCENARIOS: [&str; 9] = [
    "edit",
    "flowedit",
    "ddib",
    "recon_error",
    "eta_sweep",
    "equivalence",
    "scheduler_ablation",
    "shift_ablation",
    "optimizer_ablation",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub field: FieldConfig,
    /// Root under which the run directory is created.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Emit SVG plots next to the CSVs.
    #[serde(default = "yes")]
    pub plots: bool,
    #[serde(flatten)]
    pub scenario: Scenario,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", content = "params", rename_all = "snake_case")]
pub enum Scenario {
    Edit(#[serde(default)] EditParams),
    Flowedit(#[serde(default)] FlowEditParams),
    Ddib(#[serde(default)] DdibParams),
    ReconError(#[serde(default)] ReconParams),
    EtaSweep(#[serde(default)] EtaSweepParams),
    Equivalence(#[serde(default)] EquivalenceParams),
    SchedulerAblation(#[serde(default)] AblationParams<TimestepKind>),
    ShiftAblation(#[serde(default)] AblationParams<ShiftRule>),
    OptimizerAblation(#[serde(default)] AblationParams<OptimizerKind>),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Edit(_) => "edit",
            Scenario::Flowedit(_) => "flowedit",
            Scenario::Ddib(_) => "ddib",
            Scenario::ReconError(_) => "recon_error",
            Scenario::EtaSweep(_) => "eta_sweep",
            Scenario::Equivalence(_) => "equivalence",
            Scenario::SchedulerAblation(_) => "scheduler_ablation",
            Scenario::ShiftAblation(_) => "shift_ablation",
            Scenario::OptimizerAblation(_) => "optimizer_ablation",
        }
    }
}

/// The closed-form field a run works on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    #[serde(flatten)]
    pub kind: FieldKind,
    #[serde(default)]
    pub schedule: ScheduleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// Prompts 0 = N(0, Σ), 1 = N(shift, Σ), Σ = diag(var) (default I).
    Translation {
        shift: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        var: Option<Vec<f64>>,
    },
    /// One Gaussian mixture per prompt.
    Mixture { prompts: Vec<Vec<Component>> },
    /// Two prompts differing on a 2-d block only, with a shared 3-d block.
    Block,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    #[default]
    Rf,
    Vp {
        #[serde(default = "vp_steps")]
        steps: usize,
        #[serde(default = "vp_beta_start")]
        beta_start: f64,
        #[serde(default = "vp_beta_end")]
        beta_end: f64,
    },
}

fn vp_steps() -> usize {
    1000
}
fn vp_beta_start() -> f64 {
    1e-4
}
fn vp_beta_end() -> f64 {
    0.02
}

impl ScheduleSpec {
    pub fn build(&self) -> LabResult<Schedule> {
        Ok(match self {
            ScheduleSpec::Rf => Schedule::RectifiedFlow,
            ScheduleSpec::Vp {
                steps,
                beta_start,
                beta_end,
            } => Schedule::VpDiffusion(VpTable::linear_beta(*steps, *beta_start, *beta_end)?.into()),
        })
    }
}

/// A built field plus what the scenarios need to know about it.
pub struct BuiltField {
    pub field: CondGmmField,
    pub translation: Option<TranslationTask>,
}

impl FieldConfig {
    pub fn build(&self) -> LabResult<BuiltField> {
        let schedule = self.schedule.build()?;
        Ok(match &self.kind {
            FieldKind::Translation { shift, var } => {
                let var = var.clone().unwrap_or_else(|| vec![1.0; shift.len()]);
                if var.len() != shift.len() {
                    return Err(LabError::Schema(format!(
                        "field `field.var` has {} entries, `field.shift` has {}",
                        var.len(),
                        shift.len()
                    )));
                }
                let task = TranslationTask::with_variance(shift.clone(), var, schedule)?;
                BuiltField {
                    field: task.field.clone(),
                    translation: Some(task),
                }
            }
            FieldKind::Mixture { prompts } => {
                let conds = prompts
                    .iter()
                    .map(|c| Mixture::new(c.clone()))
                    .collect::<Result<Vec<_>, _>>()?;
                BuiltField {
                    field: CondGmmField::new(conds, schedule)?,
                    translation: None,
                }
            }
            FieldKind::Block => BuiltField {
                field: BlockTask::standard(schedule)?.field,
                translation: None,
            },
        })
    }
}

/// Where the source latent of an edit comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    /// Drawn from the source prompt with the run seed.
    #[default]
    Sample,
    Point(Vec<f64>),
}


fn src() -> Prompt {
    Prompt::Cond(0)
}
fn tgt() -> Prompt {
    Prompt::Cond(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditParams {
    pub p_src: Prompt,
    pub p_tgt: Prompt,
    pub source: SourceSpec,
    /// The run seed overrides `edit.seed`.
    pub edit: EditConfig,
}

impl Default for EditParams {
    fn default() -> Self {
        EditParams {
            p_src: src(),
            p_tgt: tgt(),
            source: SourceSpec::Sample,
            edit: EditConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowEditParams {
    pub p_src: Prompt,
    pub p_tgt: Prompt,
    pub source: SourceSpec,
    /// Number of evaluation times on the descending grid.
    pub n_steps: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub batch: usize,
    pub w_src: f64,
    pub w_tgt: f64,
}

impl Default for FlowEditParams {
    fn default() -> Self {
        FlowEditParams {
            p_src: src(),
            p_tgt: tgt(),
            source: SourceSpec::Sample,
            n_steps: 50,
            t_lo: dvrf_core::schedules::T_MIN,
            t_hi: dvrf_core::schedules::T_MAX,
            batch: 1,
            w_src: 1.5,
            w_tgt: 13.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdibParams {
    pub p_src: Prompt,
    pub p_tgt: Prompt,
    pub n_steps: usize,
    pub samples: usize,
    pub w_src: f64,
    pub w_tgt: f64,
}

impl Default for DdibParams {
    fn default() -> Self {
        DdibParams {
            p_src: src(),
            p_tgt: tgt(),
            n_steps: 400,
            samples: 16,
            w_src: 1.0,
            w_tgt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconParams {
    pub prompt: Prompt,
    pub modes: Vec<ReconMode>,
    pub n_steps: Vec<usize>,
    pub samples: usize,
    pub w: f64,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams {
            prompt: src(),
            modes: vec![ReconMode::RfEuler, ReconMode::Ddim],
            n_steps: vec![50, 250],
            samples: 8,
            w: 1.0,
        }
    }
}

/// A list of seeds or a count `n` meaning `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    /// Seeds offset by the run seed, so `--seed` changes every cell.
    pub fn resolve(&self, run_seed: u64) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).map(|s| run_seed.wrapping_add(s)).collect(),
            Seeds::List(v) => v.iter().map(|s| run_seed.wrapping_add(*s)).collect(),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(10)
    }
}

/// Guidance of the trend sweeps. Unguided branches keep the ideal edit a
/// pure translation.
pub const TREND_GUIDANCE: (f64, f64) = (1.0, 1.0);

fn trend_edit() -> EditConfig {
    EditConfig {
        w_src: TREND_GUIDANCE.0,
        w_tgt: TREND_GUIDANCE.1,
        ..EditConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaSweepParams {
    pub etas: Vec<f64>,
    pub seeds: Seeds,
    pub edit: EditConfig,
}

impl Default for EtaSweepParams {
    fn default() -> Self {
        EtaSweepParams {
            etas: vec![0.0, 0.5, 1.0],
            seeds: Seeds::default(),
            edit: trend_edit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceParams {
    pub p_src: Prompt,
    pub p_tgt: Prompt,
    pub probes: usize,
    pub n_steps: usize,
    pub batch: usize,
    pub seeds: Seeds,
    pub w_src: f64,
    pub w_tgt: f64,
    /// Rate multiplier of the FlowEdit negative control.
    pub control_lr_scale: f64,
}

impl Default for EquivalenceParams {
    fn default() -> Self {
        EquivalenceParams {
            p_src: src(),
            p_tgt: tgt(),
            probes: 50,
            n_steps: 50,
            batch: 1,
            seeds: Seeds::Count(5),
            w_src: 6.0,
            w_tgt: 16.5,
            control_lr_scale: 1.1,
        }
    }
}

pub trait AblationVariant: Clone + std::fmt::Debug {
    fn apply(&self, cfg: &EditConfig) -> EditConfig;
    fn label(&self) -> String;
    fn defaults() -> Vec<Self>;
}

impl AblationVariant for TimestepKind {
    fn apply(&self, cfg: &EditConfig) -> EditConfig {
        EditConfig {
            timesteps: *self,
            ..cfg.clone()
        }
    }
    fn label(&self) -> String {
        match self {
            TimestepKind::Descending => "descending".into(),
            TimestepKind::Random => "random".into(),
        }
    }
    fn defaults() -> Vec<Self> {
        vec![TimestepKind::Descending, TimestepKind::Random]
    }
}

impl AblationVariant for ShiftRule {
    fn apply(&self, cfg: &EditConfig) -> EditConfig {
        EditConfig {
            shift: *self,
            ..cfg.clone()
        }
    }
    fn label(&self) -> String {
        ShiftRule::label(self)
    }
    fn defaults() -> Vec<Self> {
        vec![ShiftRule::Zero, ShiftRule::Progressive, ShiftRule::LinearEta { eta: 1.0 }]
    }
}

impl AblationVariant for OptimizerKind {
    fn apply(&self, cfg: &EditConfig) -> EditConfig {
        EditConfig {
            optimizer: *self,
            ..cfg.clone()
        }
    }
    fn label(&self) -> String {
        match self {
            OptimizerKind::Sgd => "sgd".into(),
            OptimizerKind::Adam => "adam".into(),
        }
    }
    fn defaults() -> Vec<Self> {
        vec![OptimizerKind::Sgd, OptimizerKind::Adam]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationParams<V> {
    pub variants: Vec<V>,
    pub seeds: Seeds,
    pub edit: EditConfig,
}

impl<V: AblationVariant> Default for AblationParams<V> {
    fn default() -> Self {
        AblationParams {
            variants: V::defaults(),
            seeds: Seeds::default(),
            edit: trend_edit(),
        }
    }
}

fn scenario_error(found: &str) -> LabError {
    LabError::Schema(format!(
        "field `scenario`: unknown scenario `{found}`, expected one of {}",
        SCENARIOS.join(", ")
    ))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> LabResult<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| LabError::Schema(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| LabError::Schema("config must be a JSON object".into()))?;
        match obj.get("scenario") {
            None => return Err(LabError::Schema("missing field `scenario`".into())),
            Some(serde_json::Value::String(s)) if SCENARIOS.contains(&s.as_str()) => {}
            Some(serde_json::Value::String(s)) => return Err(scenario_error(s)),
            Some(other) => return Err(scenario_error(&other.to_string())),
        }
        if !obj.contains_key("seed") {
            return Err(LabError::Schema("missing field `seed`".into()));
        }
        for key in obj.keys() {
            if !["scenario", "params", "seed", "field", "out_dir", "plots"].contains(&key.as_str()) {
                return Err(LabError::Schema(format!("unknown top-level field `{key}`")));
            }
        }
        serde_json::from_value(value).map_err(|e| LabError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }
}
