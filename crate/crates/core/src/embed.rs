//! Skip-gram pretraining of per-atom token embeddings and conversion of a
//! molecule into its embedding matrix.
//!
//! Sentences are per-molecule token sequences (radius-0/radius-1 tokens
//! interleaved per atom). Training is skip-gram with negative sampling
//! against the unigram^0.75 noise distribution; all randomness is driven by
//! the config seed so the result is bitwise reproducible.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use thiserror::Error;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::graph::{atom_tokens, MolecularGraph, Token};
use crate::tape::sigmoid;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("corpus contains no sentences")]
    EmptyCorpus,
    #[error("corpus contains no token with count >= {0}")]
    NoRetainedTokens(u64),
    #[error("embedding table has {table} rows, expected {expected}")]
    RowMismatch { table: usize, expected: usize },
}

/// Token-to-index map over a training corpus. Retained tokens get dense
/// indices ordered by descending count (ties by token value); everything
/// below `min_count` maps to the reserved out-of-vocabulary index, which is
/// the last row of the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index_of: BTreeMap<Token, usize>,
    tokens: Vec<Token>,
    counts: Vec<u64>,
    min_count: u64,
}

impl Vocabulary {
    pub fn build(sentences: &[Vec<Token>], min_count: u64) -> Result<Self, EmbedError> {
        if sentences.is_empty() {
            return Err(EmbedError::EmptyCorpus);
        }
        let mut counts: BTreeMap<Token, u64> = BTreeMap::new();
        for sentence in sentences {
            for &t in sentence {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let mut retained: Vec<(Token, u64)> =
            counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        if retained.is_empty() {
            return Err(EmbedError::NoRetainedTokens(min_count));
        }
        retained.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut index_of = BTreeMap::new();
        let mut tokens = Vec::with_capacity(retained.len());
        let mut count_list = Vec::with_capacity(retained.len());
        for (idx, (token, count)) in retained.into_iter().enumerate() {
            index_of.insert(token, idx);
            tokens.push(token);
            count_list.push(count);
        }
        Ok(Vocabulary { index_of, tokens, counts: count_list, min_count })
    }

    /// Rebuilds a vocabulary from persisted `(token, count)` rows already in
    /// index order.
    pub fn from_rows(rows: Vec<(Token, u64)>, min_count: u64) -> Self {
        let mut index_of = BTreeMap::new();
        let mut tokens = Vec::with_capacity(rows.len());
        let mut counts = Vec::with_capacity(rows.len());
        for (idx, (token, count)) in rows.into_iter().enumerate() {
            index_of.insert(token, idx);
            tokens.push(token);
            counts.push(count);
        }
        Vocabulary { index_of, tokens, counts, min_count }
    }

    /// Number of retained tokens (excluding the OOV sentinel).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the reserved out-of-vocabulary sentinel.
    pub fn oov_index(&self) -> usize {
        self.tokens.len()
    }

    /// Retained tokens plus the OOV sentinel row.
    pub fn total_rows(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn lookup(&self, t: Token) -> Option<usize> {
        self.index_of.get(&t).copied()
    }

    pub fn token_at(&self, idx: usize) -> Token {
        self.tokens[idx]
    }

    pub fn count_at(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }
}

/// Skip-gram training knobs. Defaults: window 2, 5 negatives, 5 epochs,
/// learning rate 0.025.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramConfig {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig { window: 2, negatives: 5, epochs: 5, learning_rate: 0.025, seed: 1 }
    }
}

/// Token-to-vector lookup: an input matrix and a context matrix, each
/// `total_rows x d` with the OOV row kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    input: Tensor,
    context: Tensor,
    dim: usize,
}

impl EmbeddingTable {
    /// Seeded initialization: input rows uniform in `(-0.5/d, 0.5/d)`,
    /// context rows zero (the usual skip-gram start), OOV row zero.
    pub fn init(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let rows = vocab.total_rows();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut input = Tensor::zeros(rows, dim);
        for r in 0..vocab.len() {
            for c in 0..dim {
                let v: f64 = rng.gen::<f64>() - 0.5;
                input.set(r, c, v / dim as f64);
            }
        }
        let context = Tensor::zeros(rows, dim);
        EmbeddingTable { vocab, input, context, dim }
    }

    pub fn from_parts(vocab: Vocabulary, input: Tensor, context: Tensor) -> Result<Self, EmbedError> {
        let rows = vocab.total_rows();
        if input.rows() != rows || context.shape() != input.shape() {
            return Err(EmbedError::RowMismatch { table: input.rows(), expected: rows });
        }
        let dim = input.cols();
        Ok(EmbeddingTable { vocab, input, context, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn context(&self) -> &Tensor {
        &self.context
    }

    /// Input-matrix vector of a token; the zero (OOV) row when the token is
    /// out of vocabulary.
    pub fn vector(&self, t: Token) -> &[f64] {
        let idx = self.vocab.lookup(t).unwrap_or_else(|| self.vocab.oov_index());
        self.input.row(idx)
    }
}

/// Cumulative unigram^0.75 table for negative sampling.
struct NoiseTable {
    cumulative: Vec<f64>,
    total: f64,
}

impl NoiseTable {
    fn new(vocab: &Vocabulary) -> Self {
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut total = 0.0;
        for idx in 0..vocab.len() {
            total += libm::pow(vocab.count_at(idx) as f64, 0.75);
            cumulative.push(total);
        }
        NoiseTable { cumulative, total }
    }

    fn draw(&self, rng: &mut ChaCha20Rng) -> usize {
        let u: f64 = rng.gen::<f64>() * self.total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

/// Trains skip-gram with negative sampling and returns the embedding table.
/// Deterministic given the seed; with zero epochs the result equals the
/// seeded initialization.
pub fn train_skipgram(
    sentences: &[Vec<Token>],
    vocab: Vocabulary,
    dim: usize,
    config: &SkipGramConfig,
) -> Result<EmbeddingTable, EmbedError> {
    if sentences.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let noise = NoiseTable::new(&vocab);
    let mut table = EmbeddingTable::init(vocab, dim, config.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x736b_6970_6772_616d);
    // indexed sentences with OOV tokens dropped
    let indexed: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|&t| table.vocab.lookup(t)).collect())
        .collect();
    let lr = config.learning_rate;
    for _ in 0..config.epochs {
        for sentence in &indexed {
            for (pos, &center) in sentence.iter().enumerate() {
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window).min(sentence.len().saturating_sub(1));
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let positive = sentence[ctx_pos];
                    let mut input_update = alloc::vec![0.0; dim];
                    for sample_idx in 0..=config.negatives {
                        let (target, label) = if sample_idx == 0 {
                            (positive, 1.0)
                        } else {
                            let neg = noise.draw(&mut rng);
                            if neg == positive {
                                continue;
                            }
                            (neg, 0.0)
                        };
                        let dot: f64 = table
                            .input
                            .row(center)
                            .iter()
                            .zip(table.context.row(target))
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        let center_row: Vec<f64> = table.input.row(center).to_vec();
                        {
                            let ctx_start = target * dim;
                            let ctx = &mut table.context.data_mut()[ctx_start..ctx_start + dim];
                            for d in 0..dim {
                                input_update[d] += g * ctx[d];
                                ctx[d] += g * center_row[d];
                            }
                        }
                    }
                    let in_start = center * dim;
                    let input_row = &mut table.input.data_mut()[in_start..in_start + dim];
                    for d in 0..dim {
                        input_row[d] += input_update[d];
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Deterministic negative-sampling objective of a table over a corpus:
/// the mean over (center, context) pairs of
/// `-ln s(u_o . v_c) - sum_neg ln s(-u_n . v_c)` with negatives drawn from
/// the given seed. Lower is better.
pub fn sgns_loss(sentences: &[Vec<Token>], table: &EmbeddingTable, config: &SkipGramConfig, seed: u64) -> f64 {
    let noise = NoiseTable::new(&table.vocab);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for sentence in sentences {
        let indexed: Vec<usize> = sentence.iter().filter_map(|&t| table.vocab.lookup(t)).collect();
        for (pos, &center) in indexed.iter().enumerate() {
            let lo = pos.saturating_sub(config.window);
            let hi = (pos + config.window).min(indexed.len().saturating_sub(1));
            for ctx_pos in lo..=hi {
                if ctx_pos == pos {
                    continue;
                }
                let dot = |a: usize, b: usize| -> f64 {
                    table.input.row(a).iter().zip(table.context.row(b)).map(|(x, y)| x * y).sum()
                };
                let mut loss = -libm::log(sigmoid(dot(center, indexed[ctx_pos])).max(1e-12));
                for _ in 0..config.negatives {
                    let neg = noise.draw(&mut rng);
                    if neg == indexed[ctx_pos] {
                        continue;
                    }
                    loss -= libm::log(sigmoid(-dot(center, neg)).max(1e-12));
                }
                total += loss;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Embedding matrix of a molecule: row `a` is the input vector of atom a's
/// radius-1 token plus the vector of its radius-0 token; out-of-vocabulary
/// tokens contribute zero.
pub fn embed_molecule(graph: &MolecularGraph, table: &EmbeddingTable) -> Tensor {
    let n = graph.atom_count();
    let d = table.dim();
    let tokens = atom_tokens(graph);
    Tensor::from_fn(n, d, |i, j| {
        table.vector(tokens[i].radius0)[j] + table.vector(tokens[i].radius1)[j]
    })
}

/// Cosine similarity of two equal-length vectors; 0 when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb: f64 = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_smiles;
    use alloc::vec;

    fn tok(v: u64) -> Token {
        Token(v)
    }

    #[test]
    fn vocab_orders_by_frequency_then_token() {
        let sentences = vec![vec![tok(7), tok(3)], vec![tok(7)]];
        let v = Vocabulary::build(&sentences, 1).unwrap();
        assert_eq!(v.lookup(tok(7)), Some(0));
        assert_eq!(v.lookup(tok(3)), Some(1));
        assert_eq!(v.len(), 2);
        assert_eq!(v.oov_index(), 2);
    }

    #[test]
    fn vocab_min_count_threshold() {
        let sentences = vec![vec![tok(7), tok(3)], vec![tok(7)]];
        let v = Vocabulary::build(&sentences, 2).unwrap();
        assert_eq!(v.lookup(tok(7)), Some(0));
        assert_eq!(v.lookup(tok(3)), None);
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn vocab_empty_corpus_errors() {
        assert_eq!(Vocabulary::build(&[], 1).unwrap_err(), EmbedError::EmptyCorpus);
    }

    #[test]
    fn vocab_frequency_tie_breaks_by_token_value() {
        let sentences = vec![vec![tok(9), tok(2), tok(5)]];
        let v = Vocabulary::build(&sentences, 1).unwrap();
        assert_eq!(v.lookup(tok(2)), Some(0));
        assert_eq!(v.lookup(tok(5)), Some(1));
        assert_eq!(v.lookup(tok(9)), Some(2));
    }

    #[test]
    fn zero_epochs_returns_seeded_initialization() {
        let sentences = vec![vec![tok(1), tok(2), tok(3)]];
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let cfg = SkipGramConfig { epochs: 0, ..Default::default() };
        let trained = train_skipgram(&sentences, vocab.clone(), 16, &cfg).unwrap();
        let init = EmbeddingTable::init(vocab, 16, cfg.seed);
        assert_eq!(trained.input(), init.input());
        assert_eq!(trained.context(), init.context());
    }

    #[test]
    fn default_dim_gives_128_length_rows() {
        let sentences = vec![vec![tok(1), tok(2)]];
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let table = train_skipgram(&sentences, vocab, 128, &SkipGramConfig { epochs: 1, ..Default::default() }).unwrap();
        assert_eq!(table.input().cols(), 128);
        assert_eq!(table.vector(tok(1)).len(), 128);
    }

    /// Synthetic corpus: B occurs only next to A; R never co-occurs with A.
    fn co_occurrence_corpus() -> Vec<Vec<Token>> {
        let mut sentences = Vec::new();
        for i in 0..1000u64 {
            if i % 2 == 0 {
                sentences.push(vec![tok(10), tok(20), tok(10 + i % 3)]);
            } else {
                sentences.push(vec![tok(30), tok(40), tok(30 + i % 3)]);
            }
        }
        sentences
    }

    #[test]
    fn co_occurring_tokens_end_up_closer() {
        let sentences = co_occurrence_corpus();
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let table = train_skipgram(&sentences, vocab, 32, &SkipGramConfig::default()).unwrap();
        let a = table.vector(tok(10)).to_vec();
        let b = table.vector(tok(20)).to_vec();
        let r = table.vector(tok(40)).to_vec();
        assert!(cosine(&a, &b) > cosine(&a, &r) + 0.1, "{} vs {}", cosine(&a, &b), cosine(&a, &r));
    }

    #[test]
    fn objective_decreases_after_training() {
        let sentences = co_occurrence_corpus();
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let cfg = SkipGramConfig::default();
        let init = EmbeddingTable::init(vocab.clone(), 32, cfg.seed);
        let trained = train_skipgram(&sentences, vocab, 32, &cfg).unwrap();
        let before = sgns_loss(&sentences, &init, &cfg, 99);
        let after = sgns_loss(&sentences, &trained, &cfg, 99);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let sentences = co_occurrence_corpus();
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let cfg = SkipGramConfig { epochs: 2, ..Default::default() };
        let t1 = train_skipgram(&sentences, vocab.clone(), 16, &cfg).unwrap();
        let t2 = train_skipgram(&sentences, vocab, 16, &cfg).unwrap();
        assert_eq!(t1.input(), t2.input());
        assert_eq!(t1.context(), t2.context());
    }

    #[test]
    fn oov_molecule_embeds_to_zero() {
        let sentences = vec![vec![tok(1), tok(2)]];
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let table = EmbeddingTable::init(vocab, 8, 0);
        // water tokens are FNV hashes, certainly not 1 or 2
        let g = parse_smiles("O").unwrap();
        let x = embed_molecule(&g, &table);
        assert_eq!(x.shape(), (1, 8));
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn benzene_rows_identical_hexane_rows_grouped() {
        let molecules = ["c1ccccc1", "CCCCCC", "CCO", "CC(C)=O"];
        let sentences: Vec<Vec<Token>> = molecules
            .iter()
            .map(|s| crate::graph::token_sentence(&parse_smiles(s).unwrap()))
            .collect();
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let table = EmbeddingTable::init(vocab, 8, 7);

        let benzene = embed_molecule(&parse_smiles("c1ccccc1").unwrap(), &table);
        for i in 1..6 {
            assert_eq!(benzene.row(i), benzene.row(0));
        }

        let hexane = embed_molecule(&parse_smiles("CCCCCC").unwrap(), &table);
        assert_eq!(hexane.row(0), hexane.row(5));
        assert_eq!(hexane.row(1), hexane.row(4));
        assert_eq!(hexane.row(2), hexane.row(3));
        assert_ne!(hexane.row(0), hexane.row(1));
        assert_ne!(hexane.row(1), hexane.row(2));
    }

    #[test]
    fn embedding_rows_permute_with_atoms() {
        let g = parse_smiles("CCO").unwrap();
        let perm = [2usize, 0, 1];
        let p = g.permuted(&perm).unwrap();
        let sentences = vec![crate::graph::token_sentence(&g)];
        let vocab = Vocabulary::build(&sentences, 1).unwrap();
        let table = EmbeddingTable::init(vocab, 8, 3);
        let x = embed_molecule(&g, &table);
        let xp = embed_molecule(&p, &table);
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            assert_eq!(xp.row(new_idx), x.row(old_idx));
        }
    }
}
