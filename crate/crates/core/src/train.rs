//! Loss, end-to-end training, prediction, dataset splitting (random and
//! scaffold), the cross-validation protocol, and evaluation metrics.
//!
//! The solvent and solute encoders share one architecture but own separate
//! parameter sets. Embeddings come pretrained and stay frozen during
//! regression training; every stochastic step (initialization, shuffling,
//! fold splits) derives from the config seed, so runs are bitwise
//! reproducible.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::cluster::{kmeans, ClusterError, KMeansConfig};
use crate::embed::{embed_molecule, EmbeddingTable};
use crate::encoders::{
    encode_bilm, encode_gcn, BilmLayerNodes, EncoderConfig, EncoderError, EncoderKind,
    GcnLayerNodes, RnnCellNodes,
};
use crate::graph::{fingerprint, token_multiset_key, MolecularGraph, DEFAULT_FINGERPRINT_BITS};
use crate::interaction::SolvationPrediction;
use crate::optim::{OptimError, ParamSet, RmspropConfig, RmspropState};
use crate::tape::{NodeId, Tape};
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record {index} has a non-finite target")]
    NonFiniteTarget { index: usize },
    #[error("cannot split {n} records into {k} folds")]
    BadFolds { k: usize, n: usize },
    #[error("scaffold split needs at least {k} distinct solutes, found {distinct}")]
    TooFewSolutes { distinct: usize, k: usize },
    #[error("metrics need equal-length, non-empty prediction and target lists ({preds} vs {targets})")]
    LengthMismatch { preds: usize, targets: usize },
    #[error("coefficient of determination is undefined for constant targets")]
    ConstantTargets,
    #[error("embedding dimension {embedding} does not match encoder dimension {encoder}")]
    DimMismatch { embedding: usize, encoder: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("sweep needs at least one configuration")]
    NoConfigs,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

impl From<ShapeError> for TrainError {
    fn from(e: ShapeError) -> Self {
        TrainError::Encoder(EncoderError::Shape(e))
    }
}

/// One labelled example: a solvent/solute pair and its measured solvation
/// free energy in kcal/mol.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvationRecord {
    pub solvent: MolecularGraph,
    pub solute: MolecularGraph,
    pub dg_expt: f64,
    pub source_id: String,
}

/// Ordered list of records; targets are validated finite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvationDataset {
    records: Vec<SolvationRecord>,
}

impl SolvationDataset {
    pub fn new(records: Vec<SolvationRecord>) -> Result<Self, TrainError> {
        for (index, r) in records.iter().enumerate() {
            if !r.dg_expt.is_finite() {
                return Err(TrainError::NonFiniteTarget { index });
            }
        }
        Ok(SolvationDataset { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SolvationRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SolvationRecord {
        &self.records[i]
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dg_expt).collect()
    }

    /// Sub-dataset of the given record indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> SolvationDataset {
        SolvationDataset { records: indices.iter().map(|&i| self.records[i].clone()).collect() }
    }
}

/// Training protocol settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: RmspropConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder: EncoderConfig::default(),
            l2_lambda: 1e-4,
            batch_size: 32,
            epochs: 200,
            optimizer: RmspropConfig::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct GcnLayerIdx {
    w1: usize,
    w2: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct RnnCellIdx {
    w: Vec<usize>,
    u: Vec<usize>,
    b: Vec<usize>,
}

#[derive(Debug, Clone)]
struct BilmLayerIdx {
    forward: RnnCellIdx,
    backward: RnnCellIdx,
}

#[derive(Debug, Clone)]
enum EncoderIdx {
    Gcn(Vec<GcnLayerIdx>),
    Bilm(Vec<BilmLayerIdx>),
}

/// Parameter indices of one encoder (solvent or solute side).
#[derive(Debug, Clone)]
struct EncoderSide {
    idx: EncoderIdx,
    mix: usize,
}

/// Embedding matrix and propagation matrix of one molecule, precomputed
/// once since embeddings are frozen.
#[derive(Debug, Clone)]
pub struct MoleculeInputs {
    x: Tensor,
    propagation: Tensor,
}

/// A ready-to-train example: both molecule inputs plus the target.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub solvent: MoleculeInputs,
    pub solute: MoleculeInputs,
    pub target: f64,
}

/// The trained model: frozen embedding table, both encoder parameter sets
/// and the architecture snapshot.
#[derive(Debug, Clone)]
pub struct Model {
    embedding: EmbeddingTable,
    params: ParamSet,
    solvent: EncoderSide,
    solute: EncoderSide,
    l2_indices: Vec<usize>,
    config: TrainConfig,
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

impl Model {
    /// Seeded initialization: weight matrices scaled-uniform in
    /// `+-sqrt(6 / (fan_in + fan_out))`, biases and mix logits zero.
    pub fn init(embedding: EmbeddingTable, config: TrainConfig) -> Result<Self, TrainError> {
        if embedding.dim() != config.encoder.dim {
            return Err(TrainError::DimMismatch {
                embedding: embedding.dim(),
                encoder: config.encoder.dim,
            });
        }
        let mut params = ParamSet::new();
        let mut l2_indices = Vec::new();
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let d = config.encoder.dim;
        let matrix = |params: &mut ParamSet, l2: &mut Vec<usize>, rng: &mut ChaCha20Rng, name: String| {
            let bound = glorot_bound(d, d);
            let value = Tensor::from_fn(d, d, |_, _| (rng.gen::<f64>() * 2.0 - 1.0) * bound);
            let idx = params.push(name, value);
            l2.push(idx);
            idx
        };
        let build_side = |params: &mut ParamSet,
                              l2: &mut Vec<usize>,
                              rng: &mut ChaCha20Rng,
                              side: &str|
         -> EncoderSide {
            let idx = match config.encoder.kind {
                EncoderKind::Gcn => EncoderIdx::Gcn(
                    (0..config.encoder.layers)
                        .map(|l| GcnLayerIdx {
                            w1: matrix(params, l2, rng, format!("{side}.layer{l}.w1")),
                            w2: matrix(params, l2, rng, format!("{side}.layer{l}.w2")),
                            b: params.push(format!("{side}.layer{l}.b"), Tensor::zeros(1, d)),
                        })
                        .collect(),
                ),
                EncoderKind::Bilm => EncoderIdx::Bilm(
                    (0..config.encoder.layers)
                        .map(|l| {
                            let cell = |params: &mut ParamSet, l2: &mut Vec<usize>, rng: &mut ChaCha20Rng, dir: &str| {
                                let gates = config.encoder.cell.gate_names();
                                RnnCellIdx {
                                    w: gates
                                        .iter()
                                        .map(|g| matrix(params, l2, rng, format!("{side}.layer{l}.{dir}.{g}.w")))
                                        .collect(),
                                    u: gates
                                        .iter()
                                        .map(|g| matrix(params, l2, rng, format!("{side}.layer{l}.{dir}.{g}.u")))
                                        .collect(),
                                    b: gates
                                        .iter()
                                        .map(|g| params.push(format!("{side}.layer{l}.{dir}.{g}.b"), Tensor::zeros(1, d)))
                                        .collect(),
                                }
                            };
                            BilmLayerIdx {
                                forward: cell(params, l2, rng, "fwd"),
                                backward: cell(params, l2, rng, "bwd"),
                            }
                        })
                        .collect(),
                ),
            };
            let mix = params.push(format!("{side}.mix"), Tensor::zeros(1, config.encoder.layers));
            EncoderSide { idx, mix }
        };
        let solvent = build_side(&mut params, &mut l2_indices, &mut rng, "solvent");
        let solute = build_side(&mut params, &mut l2_indices, &mut rng, "solute");
        Ok(Model { embedding, params, solvent, solute, l2_indices, config })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn molecule_inputs(&self, graph: &MolecularGraph) -> MoleculeInputs {
        MoleculeInputs {
            x: embed_molecule(graph, &self.embedding),
            propagation: graph.propagation_matrix(),
        }
    }

    pub fn prepare(&self, record: &SolvationRecord) -> PreparedPair {
        PreparedPair {
            solvent: self.molecule_inputs(&record.solvent),
            solute: self.molecule_inputs(&record.solute),
            target: record.dg_expt,
        }
    }

    fn bind(&self, tape: &mut Tape, params: &ParamSet) -> Vec<NodeId> {
        params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    fn wire_encoder(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        side: &EncoderSide,
        inputs: &MoleculeInputs,
    ) -> Result<NodeId, TrainError> {
        let x = tape.leaf(inputs.x.clone());
        let mix = bound[side.mix];
        let out = match &side.idx {
            EncoderIdx::Gcn(layers) => {
                let prop = tape.leaf(inputs.propagation.clone());
                let nodes: Vec<GcnLayerNodes> = layers
                    .iter()
                    .map(|l| GcnLayerNodes { w1: bound[l.w1], w2: bound[l.w2], b: bound[l.b] })
                    .collect();
                encode_gcn(tape, x, prop, &nodes, mix)?
            }
            EncoderIdx::Bilm(layers) => {
                let cell_kind = self.config.encoder.cell;
                let nodes: Vec<BilmLayerNodes> = layers
                    .iter()
                    .map(|l| {
                        let cell = |c: &RnnCellIdx| RnnCellNodes {
                            kind: cell_kind,
                            w: c.w.iter().map(|&i| bound[i]).collect(),
                            u: c.u.iter().map(|&i| bound[i]).collect(),
                            b: c.b.iter().map(|&i| bound[i]).collect(),
                        };
                        BilmLayerNodes { forward: cell(&l.forward), backward: cell(&l.backward) }
                    })
                    .collect();
                encode_bilm(tape, x, &nodes, mix)?
            }
        };
        Ok(out.mixed)
    }

    /// Wires one pair through both encoders and the interaction readout,
    /// returning the feature nodes and the scalar energy node.
    fn wire_pair(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        pair: &PreparedPair,
    ) -> Result<(NodeId, NodeId, NodeId), TrainError> {
        let p = self.wire_encoder(tape, bound, &self.solvent, &pair.solvent)?;
        let q = self.wire_encoder(tape, bound, &self.solute, &pair.solute)?;
        let qt = tape.transpose(q);
        let prod = tape.matmul(p, qt)?;
        let neg = tape.scale(prod, -1.0);
        let dg = tape.full_sum(neg);
        Ok((p, q, dg))
    }

    /// Full regression objective on one tape: mean squared error over the
    /// pairs plus the L2 penalty on weight matrices (biases and mix logits
    /// excluded). Returns the bound parameter leaves and the loss node.
    pub fn wire_loss(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        pairs: &[PreparedPair],
    ) -> Result<(Vec<NodeId>, NodeId), TrainError> {
        if pairs.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let bound = self.bind(tape, params);
        let inv_n = 1.0 / pairs.len() as f64;
        let mut total: Option<NodeId> = None;
        for pair in pairs {
            let (_, _, dg) = self.wire_pair(tape, &bound, pair)?;
            let target = tape.leaf(Tensor::scalar(pair.target));
            let diff = tape.sub(dg, target)?;
            let sq = tape.hadamard(diff, diff)?;
            let contrib = tape.scale(sq, inv_n);
            total = Some(match total {
                Some(t) => tape.add(t, contrib)?,
                None => contrib,
            });
        }
        let mut loss = total.expect("at least one pair");
        if self.config.l2_lambda > 0.0 {
            for &idx in &self.l2_indices {
                let sq = tape.hadamard(bound[idx], bound[idx])?;
                let norm = tape.full_sum(sq);
                let penalty = tape.scale(norm, self.config.l2_lambda);
                loss = tape.add(loss, penalty)?;
            }
        }
        Ok((bound, loss))
    }

    /// Forward-only loss of an arbitrary parameter set with this model's
    /// layout; the hook for gradient checking.
    pub fn loss_value(&self, params: &ParamSet, pairs: &[PreparedPair]) -> Result<f64, TrainError> {
        let mut tape = Tape::new();
        let (_, loss) = self.wire_loss(&mut tape, params, pairs)?;
        Ok(tape.value(loss).scalar_value())
    }

    /// Accumulates d loss / d params for one batch into the parameter
    /// gradients (per-sample tapes, then the analytic L2 term) and returns
    /// the batch loss value.
    pub fn accumulate_gradients(&mut self, pairs: &[PreparedPair]) -> Result<f64, TrainError> {
        if pairs.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let inv_n = 1.0 / pairs.len() as f64;
        let mut loss = 0.0;
        for pair in pairs {
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape, &self.params);
            let (_, _, dg) = self.wire_pair(&mut tape, &bound, pair)?;
            let target = tape.leaf(Tensor::scalar(pair.target));
            let diff = tape.sub(dg, target)?;
            let sq = tape.hadamard(diff, diff)?;
            let contrib = tape.scale(sq, inv_n);
            tape.backward(contrib)?;
            loss += tape.value(contrib).scalar_value();
            for (idx, &node) in bound.iter().enumerate() {
                self.params.get_mut(idx).grad.add_assign(tape.grad(node))?;
            }
        }
        if self.config.l2_lambda > 0.0 {
            for &idx in &self.l2_indices {
                let p = self.params.get_mut(idx);
                loss += self.config.l2_lambda * p.value.sq_norm();
                let scaled = p.value.scale(2.0 * self.config.l2_lambda);
                p.grad.add_assign(&scaled)?;
            }
        }
        Ok(loss)
    }

    /// Full prediction for one solvent/solute pair: energy, interaction
    /// map, molecular vectors and both marginals.
    pub fn predict(&self, solvent: &MolecularGraph, solute: &MolecularGraph) -> Result<SolvationPrediction, TrainError> {
        let pair = PreparedPair {
            solvent: self.molecule_inputs(solvent),
            solute: self.molecule_inputs(solute),
            target: 0.0,
        };
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, &self.params);
        let (p, q, _) = self.wire_pair(&mut tape, &bound, &pair)?;
        Ok(SolvationPrediction::from_features(tape.value(p), tape.value(q))?)
    }
}

/// Mean squared error plus `l2_lambda` times the summed squared norms of
/// the given weight matrices.
pub fn loss(predictions: &[f64], targets: &[f64], weights: &[&Tensor], l2_lambda: f64) -> Result<f64, TrainError> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(TrainError::LengthMismatch { preds: predictions.len(), targets: targets.len() });
    }
    let mse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64;
    let penalty: f64 = weights.iter().map(|w| w.sq_norm()).sum();
    Ok(mse + l2_lambda * penalty)
}

/// A trained model together with the per-epoch training loss trace.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: Model,
    pub loss_trace: Vec<f64>,
}

const SHUFFLE_SALT: u64 = 0x9e3779b97f4a7c15;

/// Trains a fresh model on the dataset: seeded initialization, seeded
/// epoch shuffling, per-sample gradient accumulation over mini-batches,
/// RMSprop updates.
pub fn fit(dataset: &SolvationDataset, embedding: &EmbeddingTable, config: &TrainConfig) -> Result<FitOutcome, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut model = Model::init(embedding.clone(), config.clone())?;
    let pairs: Vec<PreparedPair> = dataset.records().iter().map(|r| model.prepare(r)).collect();
    let mut optimizer = RmspropState::new(&model.params, config.optimizer);
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let batch_size = config.batch_size.max(1);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut batch: Vec<PreparedPair> = Vec::with_capacity(batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i].clone()));
            let batch_loss = model.accumulate_gradients(&batch)?;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            optimizer.step(&mut model.params)?;
            epoch_loss += batch_loss;
            batches += 1;
        }
        loss_trace.push(epoch_loss / batches as f64);
    }
    Ok(FitOutcome { model, loss_trace })
}

/// Seeded permutation sliced into `k` nearly equal folds (sizes differ by
/// at most one); indices within a fold are sorted.
pub fn random_kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if k < 2 || k > n {
        return Err(TrainError::BadFolds { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold: Vec<usize> = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Groups records by distinct solute, clusters the solute fingerprints with
/// k-means, and returns the clusters as folds: all records of one solute
/// land in the same fold, and every fold is non-empty.
pub fn scaffold_kfold(dataset: &SolvationDataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if k < 2 {
        return Err(TrainError::BadFolds { k, n: dataset.len() });
    }
    // distinct solutes keyed by canonical token multiset, deterministic order
    let mut groups: alloc::collections::BTreeMap<u64, Vec<usize>> = alloc::collections::BTreeMap::new();
    for (i, r) in dataset.records().iter().enumerate() {
        groups.entry(token_multiset_key(&r.solute)).or_default().push(i);
    }
    if groups.len() < k {
        return Err(TrainError::TooFewSolutes { distinct: groups.len(), k });
    }
    let group_records: Vec<Vec<usize>> = groups.into_values().collect();
    let points: Vec<Vec<f64>> = group_records
        .iter()
        .map(|records| {
            let solute = &dataset.record(records[0]).solute;
            fingerprint(solute, DEFAULT_FINGERPRINT_BITS).to_f64_vec()
        })
        .collect();
    let clustering = kmeans(&points, k, seed, &KMeansConfig::default())?;
    let mut fold_groups: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
    for (g, &cluster) in clustering.assignments.iter().enumerate() {
        fold_groups[cluster].push(g);
    }
    // identical fingerprints can leave a cluster empty despite reseeding;
    // move one solute group over from the largest fold
    loop {
        let empty = match fold_groups.iter().position(|f| f.is_empty()) {
            Some(e) => e,
            None => break,
        };
        let donor = (0..k).max_by_key(|&f| fold_groups[f].len()).unwrap();
        let moved = fold_groups[donor].pop().unwrap();
        fold_groups[empty].push(moved);
    }
    let mut folds: Vec<Vec<usize>> = fold_groups
        .into_iter()
        .map(|group_ids| {
            let mut fold: Vec<usize> =
                group_ids.into_iter().flat_map(|g| group_records[g].iter().copied()).collect();
            fold.sort_unstable();
            fold
        })
        .collect();
    // stable fold order: by smallest contained index
    folds.sort_by_key(|f| f[0]);
    Ok(folds)
}

/// Mean unsigned error, root mean squared error and coefficient of
/// determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mue: f64,
    pub rmse: f64,
    pub r2: f64,
}

pub fn metrics(predictions: &[f64], targets: &[f64]) -> Result<Metrics, TrainError> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(TrainError::LengthMismatch { preds: predictions.len(), targets: targets.len() });
    }
    let n = predictions.len() as f64;
    let mue = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    let rmse = libm::sqrt(ss_res / n);
    let mean_t: f64 = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
    if ss_tot == 0.0 {
        return Err(TrainError::ConstantTargets);
    }
    Ok(Metrics { mue, rmse, r2: 1.0 - ss_res / ss_tot })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Random,
    Scaffold,
}

/// Metrics of one held-out fold, plus the mean-predictor baseline trained
/// on the same training split.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub repeat: usize,
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub metrics: Metrics,
    pub baseline_mue: f64,
}

/// Fold-averaged metrics of one repeat.
#[derive(Debug, Clone, Copy)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub mue: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// Mean and sample standard deviation over all fold entries.
#[derive(Debug, Clone, Copy)]
pub struct GrandSummary {
    pub mue_mean: f64,
    pub mue_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub baseline_mue_mean: f64,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub split: SplitKind,
    pub k: usize,
    pub repeats: usize,
    pub folds: Vec<FoldOutcome>,
    pub per_repeat: Vec<RepeatSummary>,
    pub grand: GrandSummary,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic per-(repeat, fold) seed derivation from the master seed.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    splitmix64(master ^ splitmix64(a.wrapping_add(1)) ^ splitmix64(b.wrapping_add(0x1000)))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, libm::sqrt(var))
}

/// K-fold cross-validation: per repeat, split the dataset, train on k-1
/// folds and evaluate on the held-out fold; aggregate per fold, per repeat,
/// and overall. Random splits reshuffle per repeat; scaffold splits reuse
/// the clustering with a per-repeat seed.
pub fn cross_validate(
    dataset: &SolvationDataset,
    embedding: &EmbeddingTable,
    config: &TrainConfig,
    split: SplitKind,
    k: usize,
    repeats: usize,
) -> Result<CvReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut folds_out = Vec::with_capacity(k * repeats);
    let mut per_repeat = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let split_seed = derive_seed(config.seed, repeat as u64, 0);
        let fold_sets = match split {
            SplitKind::Random => random_kfold(dataset.len(), k, split_seed)?,
            SplitKind::Scaffold => scaffold_kfold(dataset, k, split_seed)?,
        };
        let mut repeat_metrics = Vec::with_capacity(k);
        for (fold_idx, test_indices) in fold_sets.iter().enumerate() {
            let train_indices: Vec<usize> =
                (0..dataset.len()).filter(|i| !test_indices.contains(i)).collect();
            let train_set = dataset.subset(&train_indices);
            let mut fold_config = config.clone();
            fold_config.seed = derive_seed(config.seed, repeat as u64, fold_idx as u64 + 1);
            let outcome = fit(&train_set, embedding, &fold_config)?;
            let mut predictions = Vec::with_capacity(test_indices.len());
            let mut targets = Vec::with_capacity(test_indices.len());
            for &i in test_indices {
                let r = dataset.record(i);
                predictions.push(outcome.model.predict(&r.solvent, &r.solute)?.delta_g);
                targets.push(r.dg_expt);
            }
            let fold_metrics = metrics(&predictions, &targets)?;
            let train_mean: f64 =
                train_set.targets().iter().sum::<f64>() / train_set.len() as f64;
            let baseline_mue =
                targets.iter().map(|t| (t - train_mean).abs()).sum::<f64>() / targets.len() as f64;
            repeat_metrics.push(fold_metrics);
            folds_out.push(FoldOutcome {
                repeat,
                fold: fold_idx,
                test_indices: test_indices.clone(),
                metrics: fold_metrics,
                baseline_mue,
            });
        }
        let kf = repeat_metrics.len() as f64;
        per_repeat.push(RepeatSummary {
            repeat,
            mue: repeat_metrics.iter().map(|m| m.mue).sum::<f64>() / kf,
            rmse: repeat_metrics.iter().map(|m| m.rmse).sum::<f64>() / kf,
            r2: repeat_metrics.iter().map(|m| m.r2).sum::<f64>() / kf,
        });
    }
    let mues: Vec<f64> = folds_out.iter().map(|f| f.metrics.mue).collect();
    let rmses: Vec<f64> = folds_out.iter().map(|f| f.metrics.rmse).collect();
    let r2s: Vec<f64> = folds_out.iter().map(|f| f.metrics.r2).collect();
    let baselines: Vec<f64> = folds_out.iter().map(|f| f.baseline_mue).collect();
    let (mue_mean, mue_std) = mean_std(mues.iter().copied());
    let (rmse_mean, rmse_std) = mean_std(rmses.iter().copied());
    let (r2_mean, r2_std) = mean_std(r2s.iter().copied());
    let (baseline_mue_mean, _) = mean_std(baselines.iter().copied());
    Ok(CvReport {
        split,
        k,
        repeats,
        folds: folds_out,
        per_repeat,
        grand: GrandSummary { mue_mean, mue_std, rmse_mean, rmse_std, r2_mean, r2_std, baseline_mue_mean },
    })
}

/// Cross-validates every configuration and selects the best by grand-mean
/// MUE; ties break by lower RMSE, then first listed.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub best: usize,
    pub reports: Vec<CvReport>,
}

pub fn sweep(
    dataset: &SolvationDataset,
    embedding: &EmbeddingTable,
    configs: &[TrainConfig],
    split: SplitKind,
    k: usize,
    repeats: usize,
) -> Result<SweepOutcome, TrainError> {
    if configs.is_empty() {
        return Err(TrainError::NoConfigs);
    }
    let mut reports = Vec::with_capacity(configs.len());
    for config in configs {
        reports.push(cross_validate(dataset, embedding, config, split, k, repeats)?);
    }
    let mut best = 0usize;
    for (i, report) in reports.iter().enumerate().skip(1) {
        let current = &reports[best];
        let better = report.grand.mue_mean < current.grand.mue_mean
            || (report.grand.mue_mean == current.grand.mue_mean
                && report.grand.rmse_mean < current.grand.rmse_mean);
        if better {
            best = i;
        }
    }
    Ok(SweepOutcome { best, reports })
}
