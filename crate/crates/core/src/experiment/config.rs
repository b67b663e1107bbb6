use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackMlpConfig, BaselineVariant, RateSet, SelectionStrategy};
use crate::data::{generate_sbm, load_bundle, SamplingMethod, SbmConfig, SplitSizes};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_FPR_TARGET;
use crate::gnn::{preset_config, DefenseFlags, GnnConfig, GnnType, Overfitting};
use crate::graph::Graph;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Where a graph comes from: a bundle directory or a generated SBM.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    /// Name used in report tables; defaults to the bundle directory name or `sbm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SbmConfig>,
}

impl DataSource {
    pub fn bundle(path: impl Into<PathBuf>) -> Self {
        Self {
            bundle: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn synthetic(cfg: SbmConfig) -> Self {
        Self {
            synthetic: Some(cfg),
            ..Self::default()
        }
    }

    pub fn display_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match &self.bundle {
            Some(p) => p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            None => "sbm".into(),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match (&self.bundle, &self.synthetic) {
            (Some(_), Some(_)) => Err(cfg_err(format!("{what}: give either bundle or synthetic, not both"))),
            (None, None) => Err(cfg_err(format!("{what}: needs a bundle path or a synthetic section"))),
            (None, Some(s)) => s.validate().map_err(|e| cfg_err(format!("{what}.synthetic: {e}"))),
            (Some(_), None) => Ok(()),
        }
    }

    /// Same graph, ignoring the label.
    pub fn same_graph(&self, other: &DataSource) -> bool {
        self.bundle == other.bundle && self.synthetic == other.synthetic
    }

    pub fn load(&self) -> Result<Graph> {
        match (&self.bundle, &self.synthetic) {
            (Some(p), _) => load_bundle(p),
            (None, Some(s)) => generate_sbm(s),
            (None, None) => Err(cfg_err("data source is empty")),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &self.bundle {
            if p.is_relative() {
                self.bundle = Some(base.join(p));
            }
        }
    }
}

/// A model preset plus optional defense toggles and per-field overrides,
/// applied in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub gnn_type: GnnType,
    #[serde(default = "default_preset")]
    pub preset: Overfitting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defenses: Option<DefenseFlags>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gat_heads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_batchnorm: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_jumping_knowledge: Option<bool>,
}

fn default_preset() -> Overfitting {
    Overfitting::High
}

impl ModelSpec {
    pub fn preset(gnn_type: GnnType, preset: Overfitting) -> Self {
        Self {
            gnn_type,
            preset,
            defenses: None,
            num_layers: None,
            hidden_dim: None,
            gat_heads: None,
            epochs: None,
            learning_rate: None,
            weight_decay: None,
            dropout_rate: None,
            use_batchnorm: None,
            use_jumping_knowledge: None,
        }
    }

    pub fn resolve(&self, seed: u64) -> GnnConfig {
        let mut c = preset_config(self.preset, self.gnn_type);
        if let Some(d) = self.defenses {
            c = d.apply(c);
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { c.$f = v; })*};
        }
        set!(
            num_layers,
            hidden_dim,
            gat_heads,
            epochs,
            learning_rate,
            weight_decay,
            dropout_rate,
            use_batchnorm,
            use_jumping_knowledge
        );
        c.seed = seed;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideConfig {
    pub data: DataSource,
    pub model: ModelSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default)]
    pub method: SamplingMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_size: Option<usize>,
}

impl SamplingConfig {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            per_class: self.per_class,
            set_size: self.set_size,
        }
    }
}

/// Which view the replacement extrema are read from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremaSource {
    #[default]
    Shadow,
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSettings {
    #[serde(with = "rates")]
    pub rate_set: RateSet,
    pub selection: SelectionStrategy,
    /// Share of the shadow records held out for epoch selection.
    pub holdout_fraction: f64,
    pub extrema: ExtremaSource,
    pub mlp: AttackMlpConfig,
}

mod rates {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::attack::RateSet;

    pub fn serialize<S: Serializer>(r: &RateSet, s: S) -> Result<S::Ok, S::Error> {
        r.rates().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RateSet, D::Error> {
        RateSet::new(Vec::<f64>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            rate_set: RateSet::default(),
            selection: SelectionStrategy::default(),
            holdout_fraction: 0.2,
            extrema: ExtremaSource::default(),
            mlp: AttackMlpConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    JsonLines,
    Csv,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::JsonLines => "json-lines",
            ReportFormat::Csv => "csv",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json-lines" | "jsonl" => Ok(Self::JsonLines),
            "csv" => Ok(Self::Csv),
            other => Err(Error::arg(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactSettings {
    pub checkpoints: bool,
    pub attack_tables: bool,
    pub splits: bool,
    pub report_format: ReportFormat,
}

impl Default for ArtifactSettings {
    fn default() -> Self {
        Self {
            checkpoints: false,
            attack_tables: true,
            splits: true,
            report_format: ReportFormat::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationAxisKind {
    GnnType,
    Dataset,
}

/// Settings swept by the relaxation matrix. Only the list matching `axis` is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationConfig {
    pub axis: RelaxationAxisKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gnn_types: Vec<GnnType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub datasets: Vec<DataSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_fpr")]
    pub fpr_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub target: SideConfig,
    /// Defaults to the target side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow: Option<SideConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub attack: AttackSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineVariant>,
    /// Cells for the defense grid; all sixteen when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense_grid: Option<Vec<DefenseFlags>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<RelaxationConfig>,
    #[serde(default)]
    pub artifacts: ArtifactSettings,
    /// The text this config was parsed from, echoed verbatim into reports.
    #[serde(skip)]
    pub source_text: Option<String>,
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

fn default_fpr() -> f64 {
    DEFAULT_FPR_TARGET
}

impl ExperimentConfig {
    /// A single-side config with every other setting at its default.
    pub fn new(data: DataSource, model: ModelSpec) -> Self {
        Self {
            name: default_name(),
            repetitions: 1,
            base_seed: 0,
            fpr_target: DEFAULT_FPR_TARGET,
            output_dir: None,
            target: SideConfig { data, model },
            shadow: None,
            sampling: SamplingConfig::default(),
            attack: AttackSettings::default(),
            baselines: Vec::new(),
            defense_grid: None,
            relaxation: None,
            artifacts: ArtifactSettings::default(),
            source_text: None,
        }
    }

    /// Parses and validates TOML. Relative bundle and output paths are taken
    /// relative to `base_dir` when one is given.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        if let Some(base) = base_dir {
            cfg.target.data.resolve_paths(base);
            if let Some(s) = &mut cfg.shadow {
                s.data.resolve_paths(base);
            }
            if let Some(r) = &mut cfg.relaxation {
                r.datasets.iter_mut().for_each(|d| d.resolve_paths(base));
            }
            if let Some(o) = &cfg.output_dir {
                if o.is_relative() {
                    cfg.output_dir = Some(base.join(o));
                }
            }
        }
        cfg.source_text = Some(text.to_string());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }

    /// The original text when parsed from one, otherwise a TOML rendering.
    pub fn echo(&self) -> Result<String> {
        match &self.source_text {
            Some(t) => Ok(t.clone()),
            None => toml::to_string(self).map_err(|e| cfg_err(e.to_string())),
        }
    }

    pub fn shadow_side(&self) -> &SideConfig {
        self.shadow.as_ref().unwrap_or(&self.target)
    }

    /// Checks everything that can be checked without touching the file system.
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(cfg_err("repetitions must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.fpr_target) {
            return Err(cfg_err(format!("fpr_target {} outside [0, 1]", self.fpr_target)));
        }
        self.target.data.validate("target.data")?;
        self.target
            .model
            .resolve(0)
            .validate()
            .map_err(|e| cfg_err(format!("target.model: {e}")))?;
        if let Some(s) = &self.shadow {
            s.data.validate("shadow.data")?;
            s.model
                .resolve(0)
                .validate()
                .map_err(|e| cfg_err(format!("shadow.model: {e}")))?;
        }
        if self.sampling.per_class == Some(0) || self.sampling.set_size == Some(0) {
            return Err(cfg_err("sampling sizes must be positive"));
        }
        if self.sampling.method == SamplingMethod::Random && self.sampling.per_class.is_some() {
            return Err(cfg_err("sampling.per_class does not apply to random sampling"));
        }
        if !(0.0..1.0).contains(&self.attack.holdout_fraction) {
            return Err(cfg_err(format!(
                "attack.holdout_fraction {} outside [0, 1)",
                self.attack.holdout_fraction
            )));
        }
        if self.attack.holdout_fraction == 0.0
            && matches!(
                self.attack.selection,
                SelectionStrategy::TestAcc | SelectionStrategy::TestLoss
            )
        {
            return Err(cfg_err(format!(
                "selection {} needs attack.holdout_fraction > 0",
                self.attack.selection
            )));
        }
        self.attack
            .mlp
            .validate()
            .map_err(|e| cfg_err(format!("attack.mlp: {e}")))?;
        for (i, b) in self.baselines.iter().enumerate() {
            if self.baselines[..i].contains(b) {
                return Err(cfg_err(format!("baseline {b} listed twice")));
            }
        }
        if let Some(cells) = &self.defense_grid {
            if cells.is_empty() {
                return Err(cfg_err("defense_grid is empty"));
            }
            for (i, c) in cells.iter().enumerate() {
                if cells[..i].contains(c) {
                    return Err(cfg_err(format!("defense cell {:?} listed twice", c.as_array())));
                }
            }
        }
        if let Some(r) = &self.relaxation {
            let n = match r.axis {
                RelaxationAxisKind::GnnType => r.gnn_types.len(),
                RelaxationAxisKind::Dataset => r.datasets.len(),
            };
            if n < 2 {
                return Err(cfg_err("relaxation axis needs at least two entries"));
            }
            for (i, d) in r.datasets.iter().enumerate() {
                d.validate(&format!("relaxation.datasets[{i}]"))?;
            }
        }
        Ok(())
    }

    /// Validation plus the run-time checks: referenced bundle paths exist.
    pub fn check_paths(&self) -> Result<()> {
        let mut sources = vec![&self.target.data];
        if let Some(s) = &self.shadow {
            sources.push(&s.data);
        }
        if let Some(r) = &self.relaxation {
            sources.extend(&r.datasets);
        }
        for p in sources.iter().filter_map(|s| s.bundle.as_ref()) {
            if !p.is_dir() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "bundle directory not found"),
                ));
            }
        }
        Ok(())
    }
}
