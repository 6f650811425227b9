use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{BundleSpec, NuisanceConfig};
use crate::error::{ConfigIssue, Error, Result};
use crate::tensor_net::{LayerSpec, DEFAULT_TEMPERATURE};
use crate::topo::MAX_POINTS;

/// One experiment: dataset, objective, model and diagnostics settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub objective: Objective,
    #[serde(default)]
    pub encoder: EncoderConfig,
    /// Required by the reconstruction objective.
    #[serde(default)]
    pub decoder: Option<DecoderConfig>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Reconstruction,
    Contrastive,
    Classification,
    Alignment,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Reconstruction,
        Objective::Contrastive,
        Objective::Classification,
        Objective::Alignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Reconstruction => "reconstruction",
            Objective::Contrastive => "contrastive",
            Objective::Classification => "classification",
            Objective::Alignment => "alignment",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Bundle(BundleDataset),
    Circle(CircleDataset),
    DisjointCircles(DisjointCirclesDataset),
}

impl DatasetConfig {
    /// True when every point carries a semantic class.
    pub fn has_labels(&self) -> bool {
        !matches!(self, DatasetConfig::Circle(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BundleDataset {
    pub modulus: u32,
    pub digit_range: u32,
    pub canvas_height: u32,
    pub canvas_width: u32,
    pub glyph_scale: u32,
    pub glyph_set_version: u32,
    pub count: usize,
    pub seed: u64,
    pub nuisance: NuisanceConfig,
    /// Read this VLHB file instead of sampling; its spec must match.
    pub path: Option<String>,
}

impl Default for BundleDataset {
    fn default() -> Self {
        Self {
            modulus: 5,
            digit_range: 9,
            canvas_height: 16,
            canvas_width: 48,
            glyph_scale: BundleSpec::DEFAULT_GLYPH_SCALE,
            glyph_set_version: 1,
            count: 2000,
            seed: 0,
            nuisance: NuisanceConfig::default(),
            path: None,
        }
    }
}

impl BundleDataset {
    pub fn spec(&self) -> Result<BundleSpec> {
        BundleSpec::with_options(
            self.modulus,
            self.digit_range,
            self.canvas_height,
            self.canvas_width,
            self.glyph_scale,
            self.nuisance,
            self.glyph_set_version,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircleDataset {
    pub count: usize,
    pub radius: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CircleDataset {
    fn default() -> Self {
        Self {
            count: 200,
            radius: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisjointCirclesDataset {
    pub circles: usize,
    pub count_per_circle: usize,
    pub separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DisjointCirclesDataset {
    fn default() -> Self {
        Self {
            circles: 2,
            count_per_circle: 120,
            separation: 4.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Replace each hidden dense-relu block by a softmax-gated mixture.
    pub gating: bool,
    pub experts: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            latent_dim: 16,
            gating: false,
            experts: 2,
        }
    }
}

impl EncoderConfig {
    /// Layers mapping `input` to the latent space; the last layer is linear.
    pub fn layers(&self, input: usize) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut width = input;
        for &h in &self.hidden {
            if self.gating {
                layers.push(LayerSpec::SoftmaxGateMixture {
                    input: width,
                    output: h,
                    experts: self.experts,
                    hidden: vec![],
                });
            } else {
                layers.push(LayerSpec::Dense { input: width, output: h });
                layers.push(LayerSpec::Relu { width: h });
            }
            width = h;
        }
        layers.push(LayerSpec::Dense {
            input: width,
            output: self.latent_dim,
        });
        layers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub hidden: Vec<usize>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { hidden: vec![64] }
    }
}

impl DecoderConfig {
    pub fn layers(&self, latent: usize, output: usize) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut width = latent;
        for &h in &self.hidden {
            layers.push(LayerSpec::Dense { input: width, output: h });
            layers.push(LayerSpec::Relu { width: h });
            width = h;
        }
        layers.push(LayerSpec::Dense { input: width, output });
        layers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Decoupled weight decay applied to every trainable parameter.
    pub weight_decay: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            lr: 0.05,
            weight_decay: 0.01,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Epochs at which latents are recorded. Epoch 0 and the final epoch are
    /// always included.
    pub snapshot_epochs: Vec<usize>,
    pub topo_subsample: usize,
    /// Rips complexes are built up to this fraction of the latent diameter.
    pub topo_scale_fraction: f64,
    /// The scale is lowered further if the complex would exceed this size.
    pub topo_max_simplices: usize,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub convexity_pairs: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            snapshot_epochs: vec![0, 10, 25, 50, 100, 200, 300],
            topo_subsample: 400,
            topo_scale_fraction: 0.5,
            topo_max_simplices: 1_500_000,
            probe_epochs: crate::metrics::PROBE_EPOCHS,
            probe_lr: crate::metrics::PROBE_LR,
            convexity_pairs: 10_000,
        }
    }
}

impl ExperimentConfig {
    /// Default settings for `objective` on `dataset`.
    pub fn new(dataset: DatasetConfig, objective: Objective) -> Self {
        Self {
            dataset,
            objective,
            encoder: EncoderConfig::default(),
            decoder: (objective == Objective::Reconstruction).then(DecoderConfig::default),
            training: TrainingConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            output_dir: None,
        }
    }

    /// Every invariant violation, each with the offending path.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, message: String| {
            issues.push(ConfigIssue {
                path: path.into(),
                message,
            })
        };

        match &self.dataset {
            DatasetConfig::Bundle(b) => {
                if let Err(e) = b.spec() {
                    bad("dataset", e.to_string());
                }
                if b.count < 2 {
                    bad("dataset.count", format!("need at least 2 samples, got {}", b.count));
                }
            }
            DatasetConfig::Circle(c) => {
                if c.count < 3 {
                    bad("dataset.count", format!("need at least 3 points, got {}", c.count));
                }
                if !(c.radius > 0.0 && c.radius.is_finite()) {
                    bad("dataset.radius", format!("must be positive, got {}", c.radius));
                }
                if !(c.noise_sigma >= 0.0 && c.noise_sigma.is_finite()) {
                    bad("dataset.noise_sigma", format!("must be nonnegative, got {}", c.noise_sigma));
                }
            }
            DatasetConfig::DisjointCircles(c) => {
                if c.circles < 1 {
                    bad("dataset.circles", "need at least one circle".into());
                }
                if c.count_per_circle < 3 {
                    bad("dataset.count_per_circle", format!("need at least 3, got {}", c.count_per_circle));
                }
                if !(c.separation > 2.0 && c.separation.is_finite()) {
                    bad("dataset.separation", format!("must exceed 2 for unit circles, got {}", c.separation));
                }
                if !(c.noise_sigma >= 0.0 && c.noise_sigma.is_finite()) {
                    bad("dataset.noise_sigma", format!("must be nonnegative, got {}", c.noise_sigma));
                }
            }
        }

        match self.objective {
            Objective::Reconstruction if self.decoder.is_none() => {
                bad("decoder", "the reconstruction objective needs a decoder spec".into());
            }
            Objective::Classification | Objective::Alignment if !self.dataset.has_labels() => {
                bad("dataset.kind", format!("the {} objective needs a labelled dataset", self.objective));
            }
            Objective::Contrastive => match &self.dataset {
                DatasetConfig::Bundle(b) if b.nuisance != NuisanceConfig::none() => {}
                _ => bad(
                    "dataset",
                    "the contrastive objective needs a bundle dataset with an active nuisance group".into(),
                ),
            },
            _ => {}
        }

        let enc = &self.encoder;
        if enc.latent_dim == 0 {
            bad("encoder.latent_dim", "must be positive".into());
        }
        if enc.hidden.contains(&0) {
            bad("encoder.hidden", "widths must be positive".into());
        }
        if enc.gating && enc.experts < 2 {
            bad("encoder.experts", format!("gating needs at least 2 experts, got {}", enc.experts));
        }
        if let Some(dec) = &self.decoder {
            if dec.hidden.contains(&0) {
                bad("decoder.hidden", "widths must be positive".into());
            }
        }

        let t = &self.training;
        if t.batch_size == 0 {
            bad("training.batch_size", "must be positive".into());
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            bad("training.lr", format!("must be positive, got {}", t.lr));
        }
        if !(t.weight_decay >= 0.0 && t.lr * t.weight_decay < 1.0) {
            bad(
                "training.weight_decay",
                format!("must be nonnegative with lr * weight_decay < 1, got {}", t.weight_decay),
            );
        }
        if !(t.temperature > 0.0 && t.temperature.is_finite()) {
            bad("training.temperature", format!("must be positive, got {}", t.temperature));
        }

        let d = &self.diagnostics;
        if d.topo_subsample < 1 || d.topo_subsample > MAX_POINTS {
            bad(
                "diagnostics.topo_subsample",
                format!("must lie in [1, {MAX_POINTS}], got {}", d.topo_subsample),
            );
        }
        if !(d.topo_scale_fraction > 0.0 && d.topo_scale_fraction <= 1.0) {
            bad(
                "diagnostics.topo_scale_fraction",
                format!("must lie in (0, 1], got {}", d.topo_scale_fraction),
            );
        }
        if d.topo_max_simplices == 0 {
            bad("diagnostics.topo_max_simplices", "must be positive".into());
        }
        if !(d.probe_lr > 0.0 && d.probe_lr.is_finite()) {
            bad("diagnostics.probe_lr", format!("must be positive, got {}", d.probe_lr));
        }
        if d.convexity_pairs == 0 {
            bad("diagnostics.convexity_pairs", "must be positive".into());
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    /// Pretty JSON with every default filled in; parsing it gives back the
    /// same config.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn digest(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }

    /// Snapshot epochs in increasing order, restricted to the schedule and
    /// always containing 0 and the final epoch.
    pub fn snapshot_schedule(&self) -> Vec<usize> {
        let last = self.training.epochs;
        let mut epochs: Vec<usize> = self
            .diagnostics
            .snapshot_epochs
            .iter()
            .copied()
            .filter(|&e| e <= last)
            .chain([0, last])
            .collect();
        epochs.sort_unstable();
        epochs.dedup();
        epochs
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse and validate a JSON config. Errors carry the path of every problem.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(vec![ConfigIssue {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }])
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"dataset": {"kind": "bundle"}, "objective": "classification"}"#;

    fn issues(err: Error) -> Vec<ConfigIssue> {
        match err {
            Error::Config(issues) => issues,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_round_trips() {
        let config = parse_config(MINIMAL).unwrap();
        assert_eq!(config.training, TrainingConfig::default());
        assert_eq!(config.dataset, DatasetConfig::Bundle(BundleDataset::default()));
        let canonical = config.canonical_json();
        let again = parse_config(&canonical).unwrap();
        assert_eq!(again, config);
        assert_eq!(again.canonical_json(), canonical);
        assert_eq!(config.digest().len(), 64);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = r#"{"dataset": {"kind": "bundle"}, "objective": "classification", "optimiser": "adam"}"#;
        let found = issues(parse_config(text).unwrap_err());
        assert!(found[0].message.contains("optimiser"), "{found:?}");

        let nested = r#"{"dataset": {"kind": "bundle"}, "objective": "classification", "training": {"lr": 0.1, "momentum": 0.9}}"#;
        let found = issues(parse_config(nested).unwrap_err());
        assert_eq!(found[0].path, "training.momentum");
        assert!(found[0].message.contains("momentum"));
    }

    #[test]
    fn type_errors_carry_paths() {
        let text = r#"{"dataset": {"kind": "bundle"}, "objective": "classification", "training": {"epochs": "many"}}"#;
        let found = issues(parse_config(text).unwrap_err());
        assert_eq!(found[0].path, "training.epochs");
        let missing = r#"{"dataset": {"kind": "bundle"}}"#;
        assert!(issues(parse_config(missing).unwrap_err())[0].message.contains("objective"));
    }

    #[test]
    fn reconstruction_needs_decoder() {
        let text = r#"{"dataset": {"kind": "circle"}, "objective": "reconstruction"}"#;
        let found = issues(parse_config(text).unwrap_err());
        assert_eq!(found[0].path, "decoder");
        let ok = r#"{"dataset": {"kind": "circle"}, "objective": "reconstruction", "decoder": {}}"#;
        assert!(parse_config(ok).is_ok());
    }

    #[test]
    fn objective_requirements() {
        let unlabeled = r#"{"dataset": {"kind": "circle"}, "objective": "classification"}"#;
        assert_eq!(issues(parse_config(unlabeled).unwrap_err())[0].path, "dataset.kind");
        let still = r#"{"dataset": {"kind": "circle"}, "objective": "contrastive"}"#;
        assert!(parse_config(still).is_err());
    }

    #[test]
    fn all_issues_are_reported() {
        let text = r#"{"dataset": {"kind": "bundle", "modulus": 1}, "objective": "alignment",
            "training": {"lr": -1, "batch_size": 0}, "diagnostics": {"topo_subsample": 5000}}"#;
        let found = issues(parse_config(text).unwrap_err());
        let paths: Vec<&str> = found.iter().map(|i| i.path.as_str()).collect();
        for p in ["dataset", "training.lr", "training.batch_size", "diagnostics.topo_subsample"] {
            assert!(paths.contains(&p), "{paths:?}");
        }
    }

    #[test]
    fn snapshot_schedule_is_clipped() {
        let mut config = parse_config(MINIMAL).unwrap();
        config.training.epochs = 40;
        assert_eq!(config.snapshot_schedule(), vec![0, 10, 25, 40]);
        config.training.epochs = 0;
        assert_eq!(config.snapshot_schedule(), vec![0]);
    }

    #[test]
    fn gated_encoder_layers() {
        let enc = EncoderConfig {
            gating: true,
            ..EncoderConfig::default()
        };
        let layers = enc.layers(768);
        assert_eq!(layers.len(), 2);
        assert!(matches!(layers[0], LayerSpec::SoftmaxGateMixture { experts: 2, output: 64, .. }));
        assert_eq!(EncoderConfig::default().layers(768).len(), 3);
    }
}
