//! Configured experiments: data preparation, the four training regimes,
//! diagnostics and reports.

mod compare;
mod config;
mod report;

use std::time::Instant;

pub use compare::{compare_objectives, run_grid, ComparisonRow, ComparisonTable, ObjectiveSummary};
pub use config::{
    parse_config, BundleDataset, CircleDataset, DatasetConfig, DecoderConfig, DiagnosticsConfig,
    DisjointCirclesDataset, EncoderConfig, ExperimentConfig, Objective, TrainingConfig,
};
pub use report::{emit_report, latents_svg, REPORT_FILES};

use crate::bundle::{self, render_expression, LabeledDataset};
use crate::error::{Error, Result};
use crate::manifold::{sample_circle, sample_disjoint_circles, PointCloud};
use crate::metrics::{
    expansion_trace, linear_probe, orbit_collapse_ratio, train_probe, convexity_violation_rate, GroupBy,
    LatentSet, MetricSeries,
};
use crate::rng::{self, stream, SplitMix64};
use crate::tensor_net::{
    alignment_grad, backward, classification_grad, forward, forward_tracking_input, reconstruction_grad,
    scale_params, sgd_step, LayerSpec, LossKind, Network, ReadoutHead, Tensor,
};
use crate::topo::{
    betti_at, dominant_scale, pairwise_distances, rips_persistence, scale_within_budget, PersistenceDiagram,
};

use rand_distr::{Distribution, Normal};

/// Everything a finished run measured.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Hex SHA-256 of the canonical config JSON.
    pub config_digest: String,
    /// Hex SHA-256 of the training inputs and their tags.
    pub dataset_digest: String,
    pub series: MetricSeries,
    /// Latents at every snapshot epoch, in schedule order.
    pub snapshots: Vec<(usize, LatentSet)>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    /// Persistence of the (subsampled) final latents.
    pub diagram: PersistenceDiagram,
    /// Filtration cutoff actually used for `diagram`.
    pub topo_scale: f64,
    pub dominant_scale: Option<f64>,
    pub betti: Option<(usize, usize)>,
    pub orbit_ratio: Option<f64>,
    pub semantic_ratio: Option<f64>,
    pub probe_accuracy: Option<f64>,
    /// Violation rate per affine readout, e.g. `("probe", 0.0)`.
    pub convexity: Vec<(String, f64)>,
    pub encoder: Network,
    /// Trained decoder of a reconstruction run.
    pub decoder: Option<Network>,
    /// Not written to any report file.
    pub wall_seconds: f64,
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub objective: Objective,
    pub seed: u64,
    pub probe_accuracy: Option<f64>,
    pub orbit_ratio: Option<f64>,
    pub semantic_ratio: Option<f64>,
    /// Largest rate over all readouts.
    pub convexity_rate: Option<f64>,
}

impl ExperimentReport {
    pub fn final_latents(&self) -> &LatentSet {
        &self.snapshots.last().expect("a report always has a snapshot").1
    }

    pub fn convexity_rate(&self) -> Option<f64> {
        self.convexity.iter().map(|(_, r)| *r).reduce(f64::max)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            objective: self.config.objective,
            seed: self.config.training.seed,
            probe_accuracy: self.probe_accuracy,
            orbit_ratio: self.orbit_ratio,
            semantic_ratio: self.semantic_ratio,
            convexity_rate: self.convexity_rate(),
        }
    }

    /// Re-encode the training inputs with the final encoder.
    pub fn reencode(&self) -> Result<LatentSet> {
        let data = prepare(&self.config.dataset)?;
        encode(&self.encoder, &data)
    }
}

/// Training inputs as a matrix plus their tags.
pub(crate) struct Prepared {
    inputs: Tensor,
    orbit: Vec<usize>,
    semantic: Vec<usize>,
    classes: usize,
    digest: String,
    /// Source of fresh nuisance draws for contrastive positives.
    bundle: Option<LabeledDataset>,
}

impl Prepared {
    fn len(&self) -> usize {
        self.inputs.rows()
    }

    fn labelled(&self) -> bool {
        self.classes >= 2
    }
}

pub(crate) fn prepare(dataset: &DatasetConfig) -> Result<Prepared> {
    match dataset {
        DatasetConfig::Bundle(b) => {
            let spec = b.spec()?;
            let data = match &b.path {
                Some(path) => {
                    let data = bundle::io::load(std::path::Path::new(path))?;
                    if data.spec != spec {
                        return Err(Error::Format(format!("{path} was rendered with a different bundle spec")));
                    }
                    data
                }
                None => bundle::sample_dataset(&spec, b.count, b.seed)?,
            };
            let digest = config::hex_digest(&bundle::io::to_bytes(&data));
            Ok(Prepared {
                inputs: Tensor::matrix(data.len(), spec.pixel_count(), data.pixel_matrix())?,
                orbit: data.orbit_ids(),
                semantic: data.labels(),
                classes: spec.modulus() as usize,
                digest,
                bundle: Some(data),
            })
        }
        DatasetConfig::Circle(c) => {
            let cloud = sample_circle(c.count, c.radius, c.noise_sigma, c.seed)?;
            let n = cloud.len();
            from_cloud(cloud, (0..n).collect(), vec![0; n], 1)
        }
        DatasetConfig::DisjointCircles(c) => {
            let cloud = sample_disjoint_circles(c.circles, c.count_per_circle, c.separation, c.noise_sigma, c.seed)?;
            let ids = cloud.orbit_ids().expect("circle ids").to_vec();
            from_cloud(cloud, ids.clone(), ids, c.circles)
        }
    }
}

fn from_cloud(cloud: PointCloud, orbit: Vec<usize>, semantic: Vec<usize>, classes: usize) -> Result<Prepared> {
    let mut bytes: Vec<u8> = cloud.coords().iter().flat_map(|v| v.to_le_bytes()).collect();
    for &t in orbit.iter().chain(&semantic) {
        bytes.extend((t as u64).to_le_bytes());
    }
    Ok(Prepared {
        inputs: Tensor::matrix(cloud.len(), cloud.dim(), cloud.coords().to_vec())?,
        orbit,
        semantic,
        classes,
        digest: config::hex_digest(&bytes),
        bundle: None,
    })
}

fn encode(encoder: &Network, data: &Prepared) -> Result<LatentSet> {
    let z = encoder.infer(&data.inputs)?;
    let dim = z.cols();
    LatentSet::from_parts(dim, z.into_values(), data.orbit.clone(), data.semantic.clone())
}

/// Trainable state beyond the encoder.
struct Model {
    encoder: Network,
    decoder: Option<Network>,
    head: Option<Network>,
    table: Option<Tensor>,
}

impl Model {
    fn new(config: &ExperimentConfig, data: &Prepared) -> Result<Self> {
        let seed = config.training.seed;
        let latent = config.encoder.latent_dim;
        let encoder = Network::new(config.encoder.layers(data.inputs.cols()), seed)?;
        let mut model = Model {
            encoder,
            decoder: None,
            head: None,
            table: None,
        };
        // Sibling networks get their own seeds so they never share init draws
        // with the encoder.
        match config.objective {
            Objective::Reconstruction => {
                let dec = config.decoder.as_ref().expect("validated");
                let layers = dec.layers(latent, data.inputs.cols());
                model.decoder = Some(Network::new(layers, rng::derive_seed(seed, stream::NETWORK_INIT, 1))?);
            }
            Objective::Classification => {
                let layers = vec![LayerSpec::Dense {
                    input: latent,
                    output: data.classes,
                }];
                model.head = Some(Network::new(layers, rng::derive_seed(seed, stream::NETWORK_INIT, 2))?);
            }
            Objective::Alignment => {
                let mut rng = SplitMix64::for_item(seed, stream::LABEL_TABLE, 0);
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                let values = (0..data.classes * latent).map(|_| normal.sample(&mut rng)).collect();
                model.table = Some(Tensor::matrix(data.classes, latent, values)?);
            }
            Objective::Contrastive => {}
        }
        Ok(model)
    }

    /// One SGD step on the rows `idx`; returns the batch loss before the step.
    fn step(&mut self, config: &ExperimentConfig, data: &Prepared, idx: &[usize], epoch: usize) -> Result<f64> {
        let t = &config.training;
        let x = data.inputs.select_rows(idx);
        let loss = self.descend(config, data, &x, idx, epoch)?;
        if t.weight_decay > 0.0 {
            let keep = 1.0 - t.lr * t.weight_decay;
            for net in [Some(&mut self.encoder), self.decoder.as_mut(), self.head.as_mut()].into_iter().flatten() {
                scale_params(net, keep);
            }
            if let Some(table) = &mut self.table {
                table.values_mut().iter_mut().for_each(|v| *v *= keep);
            }
        }
        Ok(loss)
    }

    fn descend(&mut self, config: &ExperimentConfig, data: &Prepared, x: &Tensor, idx: &[usize], epoch: usize) -> Result<f64> {
        let t = &config.training;
        match config.objective {
            Objective::Reconstruction => {
                let decoder = self.decoder.as_ref().expect("decoder built");
                let (z, enc_tape) = forward(&self.encoder, &x)?;
                let (x_hat, dec_tape) = forward_tracking_input(decoder, &z)?;
                let (loss, g) = reconstruction_grad(&x_hat, &x)?;
                let dec_grads = backward(&dec_tape, &g)?;
                let enc_grads = backward(&enc_tape, dec_grads.input.as_ref().expect("tracked input"))?;
                self.decoder = Some(sgd_step(decoder, &dec_grads, t.lr)?);
                self.encoder = sgd_step(&self.encoder, &enc_grads, t.lr)?;
                Ok(loss)
            }
            Objective::Classification => {
                let head = self.head.as_ref().expect("head built");
                let labels: Vec<usize> = idx.iter().map(|&i| data.semantic[i]).collect();
                let (z, enc_tape) = forward(&self.encoder, &x)?;
                let (logits, head_tape) = forward_tracking_input(head, &z)?;
                let (loss, g) = classification_grad(&logits, &labels)?;
                let head_grads = backward(&head_tape, &g)?;
                let enc_grads = backward(&enc_tape, head_grads.input.as_ref().expect("tracked input"))?;
                self.head = Some(sgd_step(head, &head_grads, t.lr)?);
                self.encoder = sgd_step(&self.encoder, &enc_grads, t.lr)?;
                Ok(loss)
            }
            Objective::Alignment => {
                let table = self.table.as_mut().expect("table built");
                let labels: Vec<usize> = idx.iter().map(|&i| data.semantic[i]).collect();
                let (z, enc_tape) = forward(&self.encoder, &x)?;
                let (loss, gz, gt) = alignment_grad(&z, table, &labels, t.temperature)?;
                let enc_grads = backward(&enc_tape, &gz)?;
                for (w, g) in table.values_mut().iter_mut().zip(gt.values()) {
                    *w -= t.lr * g;
                }
                if !table.all_finite() {
                    return Err(Error::Numeric("label table became non-finite".into()));
                }
                self.encoder = sgd_step(&self.encoder, &enc_grads, t.lr)?;
                Ok(loss)
            }
            Objective::Contrastive => {
                let positives = redraw(data, idx, t.seed, epoch)?;
                let pair = Tensor::vstack(&x, &positives)?;
                let (z, tape) = forward(&self.encoder, &pair)?;
                let (loss, g) = LossKind::Contrastive {
                    temperature: t.temperature,
                }
                .evaluate(&z)?;
                let grads = backward(&tape, &g)?;
                self.encoder = sgd_step(&self.encoder, &grads, t.lr)?;
                Ok(loss)
            }
        }
    }
}

/// A fresh nuisance rendering of the same `(a, b)` for every row in `idx`.
fn redraw(data: &Prepared, idx: &[usize], seed: u64, epoch: usize) -> Result<Tensor> {
    let set = data.bundle.as_ref().expect("contrastive runs on a bundle");
    let n = data.len() as u64;
    let mut values = Vec::with_capacity(idx.len() * data.inputs.cols());
    for &i in idx {
        let item = &set.items[i];
        let mut rng = SplitMix64::for_item(seed, stream::POSITIVE_PICK, epoch as u64 * n + i as u64);
        let draw = set.spec.nuisance().sample(&mut rng);
        let obs = render_expression(i64::from(item.a), i64::from(item.b), &draw, &set.spec)?;
        values.extend(obs.pixels.iter().map(|&p| f64::from(p)));
    }
    Tensor::matrix(idx.len(), data.inputs.cols(), values)
}

/// Train per `config`, capture snapshots and run every diagnostic.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let context = format!("{} (seed {})", config.objective, config.training.seed);
    run_validated(config).map_err(|source| Error::Experiment {
        context,
        source: Box::new(source),
    })
}

fn run_validated(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let data = prepare(&config.dataset)?;
    let t = &config.training;
    let schedule = config.snapshot_schedule();
    let mut model = Model::new(config, &data)?;

    let mut snapshots = vec![(0, encode(&model.encoder, &data)?)];
    let mut loss_history = Vec::with_capacity(t.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=t.epochs {
        let mut rng = SplitMix64::for_item(t.seed, stream::TRAIN_SHUFFLE, epoch as u64);
        rng::shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(t.batch_size) {
            let loss = model
                .step(config, &data, chunk, epoch)
                .map_err(|e| at_epoch(e, epoch))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss became {loss} at epoch {epoch}")));
            }
            total += loss;
            batches += 1;
        }
        loss_history.push(total / batches as f64);
        if schedule.binary_search(&epoch).is_ok() {
            snapshots.push((epoch, encode(&model.encoder, &data)?));
        }
    }

    let d = &config.diagnostics;
    let mut series = expansion_trace(&snapshots)?;
    if data.labelled() {
        for (slot, (_, latents)) in series.probe_accuracy.iter_mut().zip(&snapshots) {
            *slot = Some(linear_probe(latents, d.probe_epochs, d.probe_lr, t.seed)?);
        }
    }

    let latents = &snapshots.last().expect("epoch 0 snapshot").1;
    let orbit_ratio = optional(orbit_collapse_ratio(latents, GroupBy::Orbit))?;
    let semantic_ratio = optional(orbit_collapse_ratio(latents, GroupBy::Semantic))?;
    let mut probe_accuracy = None;
    let mut convexity = Vec::new();
    if data.labelled() {
        let probe = train_probe(latents, d.probe_epochs, d.probe_lr, t.seed)?;
        probe_accuracy = Some(probe.accuracy);
        convexity.push(("probe".to_string(), convexity_violation_rate(&probe.head, latents, d.convexity_pairs, t.seed)?));
        if let Some(head) = &model.head {
            let head = ReadoutHead::from_dense(head)?;
            convexity.push(("classifier".to_string(), convexity_violation_rate(&head, latents, d.convexity_pairs, t.seed)?));
        }
    }

    let sample = latents.cloud().subsample(d.topo_subsample, t.seed);
    let dmat = pairwise_distances(&sample)?;
    let diameter = dmat.max_distance();
    let (diagram, topo_scale) = if diameter > 0.0 {
        let scale = scale_within_budget(&dmat, d.topo_scale_fraction * diameter, d.topo_max_simplices);
        (rips_persistence(&dmat, scale)?, scale)
    } else {
        (PersistenceDiagram::empty(), 0.0)
    };
    let dominant = if diameter > 0.0 { optional(dominant_scale(&diagram))? } else { None };
    let betti = dominant.map(|s| betti_at(&diagram, s));

    Ok(ExperimentReport {
        config: config.clone(),
        config_digest: config.digest(),
        dataset_digest: data.digest,
        series,
        snapshots,
        loss_history,
        diagram,
        topo_scale,
        dominant_scale: dominant,
        betti,
        orbit_ratio,
        semantic_ratio,
        probe_accuracy,
        convexity,
        encoder: model.encoder,
        decoder: model.decoder,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("{msg} at epoch {epoch}")),
        other => other,
    }
}

/// Statistics that are undefined on degenerate latents become `None`.
fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
