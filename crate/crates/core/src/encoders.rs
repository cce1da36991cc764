//! The two encoders mapping an embedding matrix to a feature matrix: a
//! stacked skip-connected graph convolution and a stacked bidirectional
//! recurrent network (GRU or LSTM cells), each followed by a trainable
//! softmax-weighted mix of the stacked layers.
//!
//! All functions build onto a [`Tape`], so one forward pass serves both
//! prediction (read the values) and training (run backward).

use alloc::vec::Vec;
use thiserror::Error;

use crate::tape::{NodeId, Tape};
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Gcn,
    Bilm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    /// Gate count: 3 for GRU (update, reset, candidate), 4 for LSTM
    /// (input, forget, output, candidate).
    pub fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "h"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        }
    }
}

/// Architecture shared by the solvent and solute encoders (their parameter
/// sets stay independent).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub cell: CellKind,
    pub layers: usize,
    pub dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { kind: EncoderKind::Gcn, cell: CellKind::Gru, layers: 2, dim: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("layer mix requires at least one layer")]
    NoLayers,
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Tape nodes of one graph-convolution layer: two `d x d` filters and a
/// `1 x d` bias.
#[derive(Debug, Clone, Copy)]
pub struct GcnLayerNodes {
    pub w1: NodeId,
    pub w2: NodeId,
    pub b: NodeId,
}

/// Tape nodes of one recurrent cell: per gate, an input filter, a recurrent
/// filter and a bias, in [`CellKind::gate_names`] order.
#[derive(Debug, Clone)]
pub struct RnnCellNodes {
    pub kind: CellKind,
    pub w: Vec<NodeId>,
    pub u: Vec<NodeId>,
    pub b: Vec<NodeId>,
}

/// Forward and backward direction cells of one stacked BiLM layer.
#[derive(Debug, Clone)]
pub struct BilmLayerNodes {
    pub forward: RnnCellNodes,
    pub backward: RnnCellNodes,
}

/// Per-layer hidden matrices and the mixed feature matrix.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub layers: Vec<NodeId>,
    pub mixed: NodeId,
}

/// One skip-connected graph convolution:
/// `tanh(propagation . H . W1 + H . W2 + bias)` with the bias broadcast
/// across rows. With the degree-zero convention a single-atom molecule
/// reduces to `tanh(H W2 + b)`.
pub fn gcn_layer(
    tape: &mut Tape,
    h: NodeId,
    propagation: NodeId,
    layer: &GcnLayerNodes,
) -> Result<NodeId, EncoderError> {
    let conv = tape.matmul(propagation, h)?;
    let conv = tape.matmul(conv, layer.w1)?;
    let skip = tape.matmul(h, layer.w2)?;
    let sum = tape.add(conv, skip)?;
    let biased = tape.add_row_broadcast(sum, layer.b)?;
    Ok(tape.tanh(biased))
}

/// Stacks `gcn_layer` from `H(0) = X` and mixes the stacked outputs.
pub fn encode_gcn(
    tape: &mut Tape,
    x: NodeId,
    propagation: NodeId,
    layers: &[GcnLayerNodes],
    mix_logits: NodeId,
) -> Result<EncoderOutput, EncoderError> {
    let mut hidden = Vec::with_capacity(layers.len());
    let mut h = x;
    for layer in layers {
        h = gcn_layer(tape, h, propagation, layer)?;
        hidden.push(h);
    }
    let mixed = layer_mix(tape, &hidden, mix_logits)?;
    Ok(EncoderOutput { layers: hidden, mixed })
}

/// One recurrent step. GRU:
/// `z = s(x Wz + h Uz + bz)`, `r = s(x Wr + h Ur + br)`,
/// `hc = tanh(x Wh + (r * h) Uh + bh)`, `h' = (1 - z) * h + z * hc`.
/// LSTM gates use the logistic sigmoid with candidate `g = tanh(.)`,
/// `c' = f * c + i * g`, `h' = o * tanh(c')`.
pub fn rnn_step(
    tape: &mut Tape,
    cell: &RnnCellNodes,
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: Option<NodeId>,
) -> Result<(NodeId, Option<NodeId>), EncoderError> {
    let gate = |tape: &mut Tape, idx: usize, state: NodeId| -> Result<NodeId, EncoderError> {
        let xw = tape.matmul(x_t, cell.w[idx])?;
        let hu = tape.matmul(state, cell.u[idx])?;
        let sum = tape.add(xw, hu)?;
        Ok(tape.add(sum, cell.b[idx])?)
    };
    match cell.kind {
        CellKind::Gru => {
            let z_pre = gate(tape, 0, h_prev)?;
            let z = tape.sigmoid(z_pre);
            let r_pre = gate(tape, 1, h_prev)?;
            let r = tape.sigmoid(r_pre);
            let rh = tape.hadamard(r, h_prev)?;
            let cand_pre = {
                let xw = tape.matmul(x_t, cell.w[2])?;
                let hu = tape.matmul(rh, cell.u[2])?;
                let sum = tape.add(xw, hu)?;
                tape.add(sum, cell.b[2])?
            };
            let cand = tape.tanh(cand_pre);
            let dim = tape.value(h_prev).cols();
            let ones = tape.leaf(Tensor::from_fn(1, dim, |_, _| 1.0));
            let one_minus_z = tape.sub(ones, z)?;
            let keep = tape.hadamard(one_minus_z, h_prev)?;
            let update = tape.hadamard(z, cand)?;
            let h = tape.add(keep, update)?;
            Ok((h, None))
        }
        CellKind::Lstm => {
            let c_prev = c_prev.expect("LSTM step requires a cell state");
            let i_pre = gate(tape, 0, h_prev)?;
            let i = tape.sigmoid(i_pre);
            let f_pre = gate(tape, 1, h_prev)?;
            let f = tape.sigmoid(f_pre);
            let o_pre = gate(tape, 2, h_prev)?;
            let o = tape.sigmoid(o_pre);
            let g_pre = gate(tape, 3, h_prev)?;
            let g = tape.tanh(g_pre);
            let keep = tape.hadamard(f, c_prev)?;
            let write = tape.hadamard(i, g)?;
            let c = tape.add(keep, write)?;
            let c_act = tape.tanh(c);
            let h = tape.hadamard(o, c_act)?;
            Ok((h, Some(c)))
        }
    }
}

/// Stacked bidirectional recurrent encoder. Both directions of every layer
/// consume the previous layer's merged sequence (the elementwise sum of the
/// direction outputs); hidden and cell states start at zero. The mix runs
/// over the merged layer matrices.
pub fn encode_bilm(
    tape: &mut Tape,
    x: NodeId,
    layers: &[BilmLayerNodes],
    mix_logits: NodeId,
) -> Result<EncoderOutput, EncoderError> {
    let n = tape.value(x).rows();
    let dim = tape.value(x).cols();
    let mut sequence: Vec<NodeId> = (0..n).map(|t| tape.row(x, t)).collect();
    let mut hidden = Vec::with_capacity(layers.len());
    for layer in layers {
        let fwd = run_direction(tape, &layer.forward, dim, &sequence, false)?;
        let bwd = run_direction(tape, &layer.backward, dim, &sequence, true)?;
        let merged: Vec<NodeId> = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.add(f, b))
            .collect::<Result<_, _>>()?;
        hidden.push(tape.stack_rows(&merged)?);
        sequence = merged;
    }
    let mixed = layer_mix(tape, &hidden, mix_logits)?;
    Ok(EncoderOutput { layers: hidden, mixed })
}

fn run_direction(
    tape: &mut Tape,
    cell: &RnnCellNodes,
    dim: usize,
    sequence: &[NodeId],
    reversed: bool,
) -> Result<Vec<NodeId>, EncoderError> {
    let mut h = tape.leaf(Tensor::zeros(1, dim));
    let mut c = match cell.kind {
        CellKind::Lstm => Some(tape.leaf(Tensor::zeros(1, dim))),
        CellKind::Gru => None,
    };
    let n = sequence.len();
    let mut out = alloc::vec![None; n];
    for step in 0..n {
        let t = if reversed { n - 1 - step } else { step };
        let (h_next, c_next) = rnn_step(tape, cell, sequence[t], h, c)?;
        h = h_next;
        c = c_next;
        out[t] = Some(h);
    }
    Ok(out.into_iter().map(|o| o.expect("all positions visited")).collect())
}

/// Softmax-weighted sum of stacked layer matrices; the logits are trainable
/// end to end.
pub fn layer_mix(tape: &mut Tape, layers: &[NodeId], mix_logits: NodeId) -> Result<NodeId, EncoderError> {
    if layers.is_empty() {
        return Err(EncoderError::NoLayers);
    }
    let coeffs = tape.softmax(mix_logits)?;
    if tape.value(coeffs).cols() != layers.len() {
        return Err(EncoderError::Shape(ShapeError {
            op: "layer_mix",
            lhs: tape.value(coeffs).shape(),
            rhs: (1, layers.len()),
        }));
    }
    let mut mixed: Option<NodeId> = None;
    for (i, &layer) in layers.iter().enumerate() {
        let c = tape.entry(coeffs, 0, i);
        let term = tape.scale_by_node(layer, c)?;
        mixed = Some(match mixed {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok(mixed.expect("at least one layer"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_tensor(rng: &mut ChaCha20Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| (rng.gen::<f64>() - 0.5) * scale)
    }

    fn gcn_nodes(tape: &mut Tape, rng: &mut ChaCha20Rng, d: usize, zero: bool) -> GcnLayerNodes {
        let scale = if zero { 0.0 } else { 0.8 };
        GcnLayerNodes {
            w1: tape.leaf(random_tensor(rng, d, d, scale)),
            w2: tape.leaf(random_tensor(rng, d, d, scale)),
            b: tape.leaf(random_tensor(rng, 1, d, scale)),
        }
    }

    fn rnn_nodes(tape: &mut Tape, rng: &mut ChaCha20Rng, kind: CellKind, d: usize, zero: bool) -> RnnCellNodes {
        let scale = if zero { 0.0 } else { 0.8 };
        let gates = kind.gates();
        RnnCellNodes {
            kind,
            w: (0..gates).map(|_| tape.leaf(random_tensor(rng, d, d, scale))).collect(),
            u: (0..gates).map(|_| tape.leaf(random_tensor(rng, d, d, scale))).collect(),
            b: (0..gates).map(|_| tape.leaf(random_tensor(rng, 1, d, scale))).collect(),
        }
    }

    #[test]
    fn gcn_layer_zero_parameters_gives_zero() {
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let h = tape.leaf(random_tensor(&mut rng, 3, 4, 1.0));
        let a = tape.leaf(Tensor::zeros(3, 3));
        let layer = gcn_nodes(&mut tape, &mut rng, 4, true);
        let out = gcn_layer(&mut tape, h, a, &layer).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_single_atom_ignores_w1() {
        // propagation matrix of a single atom is [[0]]; only W2 and b act
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let h_val = random_tensor(&mut rng, 1, 5, 1.0);
        let w2_val = random_tensor(&mut rng, 5, 5, 1.0);
        let b_val = random_tensor(&mut rng, 1, 5, 1.0);
        let run = |w1_val: Tensor| {
            let mut tape = Tape::new();
            let h = tape.leaf(h_val.clone());
            let a = tape.leaf(Tensor::zeros(1, 1));
            let layer = GcnLayerNodes {
                w1: tape.leaf(w1_val),
                w2: tape.leaf(w2_val.clone()),
                b: tape.leaf(b_val.clone()),
            };
            let out = gcn_layer(&mut tape, h, a, &layer).unwrap();
            tape.value(out).clone()
        };
        let with_zero = run(Tensor::zeros(5, 5));
        let w1_random = random_tensor(&mut rng, 5, 5, 3.0);
        let with_random = run(w1_random);
        assert_eq!(with_zero, with_random);
        // and matches tanh(H W2 + b) directly
        let expected = h_val.matmul(&w2_val).unwrap().add(&b_val).unwrap().map(libm::tanh);
        assert_eq!(with_zero, expected);
    }

    #[test]
    fn gcn_layer_is_permutation_equivariant() {
        let n = 5;
        let d = 4;
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let h_val = random_tensor(&mut rng, n, d, 1.0);
        // a small symmetric zero-diagonal "propagation" matrix
        let mut a_val = Tensor::zeros(n, n);
        for (i, j) in [(0usize, 1usize), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)] {
            a_val.set(i, j, 0.5);
            a_val.set(j, i, 0.5);
        }
        let w1_val = random_tensor(&mut rng, d, d, 1.0);
        let w2_val = random_tensor(&mut rng, d, d, 1.0);
        let b_val = random_tensor(&mut rng, 1, d, 1.0);
        let run = |h: &Tensor, a: &Tensor| {
            let mut tape = Tape::new();
            let hn = tape.leaf(h.clone());
            let an = tape.leaf(a.clone());
            let layer = GcnLayerNodes {
                w1: tape.leaf(w1_val.clone()),
                w2: tape.leaf(w2_val.clone()),
                b: tape.leaf(b_val.clone()),
            };
            let out = gcn_layer(&mut tape, hn, an, &layer).unwrap();
            tape.value(out).clone()
        };
        let base = run(&h_val, &a_val);
        let perm = [3usize, 0, 4, 1, 2];
        let h_perm = Tensor::from_fn(n, d, |i, j| h_val.get(perm[i], j));
        let a_perm = Tensor::from_fn(n, n, |i, j| a_val.get(perm[i], perm[j]));
        let permuted = run(&h_perm, &a_perm);
        for i in 0..n {
            for j in 0..d {
                assert!((permuted.get(i, j) - base.get(perm[i], j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_gcn_single_layer_mix_is_identity() {
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = tape.leaf(random_tensor(&mut rng, 3, 4, 1.0));
        let a = tape.leaf(Tensor::zeros(3, 3));
        let layers = vec![gcn_nodes(&mut tape, &mut rng, 4, false)];
        let logits = tape.leaf(Tensor::from_vec(1, 1, vec![123.0]));
        let out = encode_gcn(&mut tape, x, a, &layers, logits).unwrap();
        assert_eq!(tape.value(out.mixed), tape.value(out.layers[0]));
    }

    #[test]
    fn encode_gcn_zero_parameters_gives_zero_features() {
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let x = tape.leaf(random_tensor(&mut rng, 3, 4, 1.0));
        let a = tape.leaf(Tensor::zeros(3, 3));
        let layers = vec![gcn_nodes(&mut tape, &mut rng, 4, true), gcn_nodes(&mut tape, &mut rng, 4, true)];
        let logits = tape.leaf(Tensor::zeros(1, 2));
        let out = encode_gcn(&mut tape, x, a, &layers, logits).unwrap();
        assert!(tape.value(out.mixed).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_gcn_preserves_row_symmetry() {
        // identical rows + a symmetric ring: every output row identical
        let n = 6;
        let d = 3;
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = tape.leaf(Tensor::from_fn(n, d, |_, j| 0.3 * (j as f64 + 1.0)));
        let mut ring = Tensor::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            ring.set(i, j, 0.5);
            ring.set(j, i, 0.5);
        }
        let a = tape.leaf(ring);
        let layers = vec![gcn_nodes(&mut tape, &mut rng, d, false), gcn_nodes(&mut tape, &mut rng, d, false)];
        let logits = tape.leaf(Tensor::zeros(1, 2));
        let out = encode_gcn(&mut tape, x, a, &layers, logits).unwrap();
        let p = tape.value(out.mixed);
        for i in 1..n {
            assert_eq!(p.row(i), p.row(0));
        }
    }

    #[test]
    fn gru_zero_parameters_halves_previous_state() {
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let cell = rnn_nodes(&mut tape, &mut rng, CellKind::Gru, 4, true);
        let h_prev = tape.leaf(random_tensor(&mut rng, 1, 4, 2.0));
        let x_t = tape.leaf(random_tensor(&mut rng, 1, 4, 2.0));
        let (h, c) = rnn_step(&mut tape, &cell, x_t, h_prev, None).unwrap();
        assert!(c.is_none());
        let expected = tape.value(h_prev).scale(0.5);
        let actual = tape.value(h);
        for (a, e) in actual.data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_zero_parameters_halves_cell_state() {
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let cell = rnn_nodes(&mut tape, &mut rng, CellKind::Lstm, 4, true);
        let h_prev = tape.leaf(random_tensor(&mut rng, 1, 4, 2.0));
        let c_prev_val = random_tensor(&mut rng, 1, 4, 2.0);
        let c_prev = tape.leaf(c_prev_val.clone());
        let x_t = tape.leaf(random_tensor(&mut rng, 1, 4, 2.0));
        let (h, c) = rnn_step(&mut tape, &cell, x_t, h_prev, Some(c_prev)).unwrap();
        let c = c.unwrap();
        for (cv, cp) in tape.value(c).data().iter().zip(c_prev_val.data()) {
            assert!((cv - 0.5 * cp).abs() < 1e-15);
        }
        for (hv, cp) in tape.value(h).data().iter().zip(c_prev_val.data()) {
            assert!((hv - 0.5 * libm::tanh(0.5 * cp)).abs() < 1e-15);
        }
    }

    #[test]
    fn rnn_outputs_stay_bounded() {
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for kind in [CellKind::Gru, CellKind::Lstm] {
            let cell = rnn_nodes(&mut tape, &mut rng, kind, 6, false);
            let mut h = tape.leaf(Tensor::zeros(1, 6));
            let mut c = match kind {
                CellKind::Lstm => Some(tape.leaf(Tensor::zeros(1, 6))),
                CellKind::Gru => None,
            };
            for _ in 0..20 {
                let x = tape.leaf(random_tensor(&mut rng, 1, 6, 4.0));
                let (hn, cn) = rnn_step(&mut tape, &cell, x, h, c).unwrap();
                h = hn;
                c = cn;
                if kind == CellKind::Gru {
                    assert!(tape.value(h).data().iter().all(|&v| v.abs() < 1.0));
                }
            }
        }
    }

    #[test]
    fn bilm_single_atom_doubles_single_step_output() {
        let d = 4;
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x_val = random_tensor(&mut rng, 1, d, 1.0);
        let x = tape.leaf(x_val.clone());
        let cell = rnn_nodes(&mut tape, &mut rng, CellKind::Gru, d, false);
        let layer = BilmLayerNodes { forward: cell.clone(), backward: cell.clone() };
        let logits = tape.leaf(Tensor::zeros(1, 1));
        let out = encode_bilm(&mut tape, x, &[layer], logits).unwrap();
        // single forward step from zero state with the same cell
        let h0 = tape.leaf(Tensor::zeros(1, d));
        let x_row = tape.leaf(x_val);
        let (h1, _) = rnn_step(&mut tape, &cell, x_row, h0, None).unwrap();
        let doubled = tape.value(h1).scale(2.0);
        for (a, e) in tape.value(out.mixed).data().iter().zip(doubled.data()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn bilm_zero_parameters_from_zero_state_stay_zero() {
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let x = tape.leaf(random_tensor(&mut rng, 3, 4, 1.0));
        let layer = BilmLayerNodes {
            forward: rnn_nodes(&mut tape, &mut rng, CellKind::Gru, 4, true),
            backward: rnn_nodes(&mut tape, &mut rng, CellKind::Gru, 4, true),
        };
        let logits = tape.leaf(Tensor::zeros(1, 1));
        let out = encode_bilm(&mut tape, x, &[layer], logits).unwrap();
        assert!(tape.value(out.mixed).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bilm_reversal_with_swapped_directions_reverses_rows() {
        let n = 4;
        let d = 3;
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x_val = random_tensor(&mut rng, n, d, 1.0);
        let x_rev = Tensor::from_fn(n, d, |i, j| x_val.get(n - 1 - i, j));

        let mut weights = Vec::new();
        for _ in 0..2 {
            // (w, u, b) per gate for one direction
            let mut dir = Vec::new();
            for _ in 0..3 {
                dir.push((
                    random_tensor(&mut rng, d, d, 1.0),
                    random_tensor(&mut rng, d, d, 1.0),
                    random_tensor(&mut rng, 1, d, 1.0),
                ));
            }
            weights.push(dir);
        }
        let build = |tape: &mut Tape, dir: &[(Tensor, Tensor, Tensor)]| RnnCellNodes {
            kind: CellKind::Gru,
            w: dir.iter().map(|(w, _, _)| tape.leaf(w.clone())).collect(),
            u: dir.iter().map(|(_, u, _)| tape.leaf(u.clone())).collect(),
            b: dir.iter().map(|(_, _, b)| tape.leaf(b.clone())).collect(),
        };

        let mut tape = Tape::new();
        let xn = tape.leaf(x_val);
        let layer = BilmLayerNodes {
            forward: build(&mut tape, &weights[0]),
            backward: build(&mut tape, &weights[1]),
        };
        let logits = tape.leaf(Tensor::zeros(1, 1));
        let base = encode_bilm(&mut tape, xn, &[layer], logits).unwrap();
        let base_p = tape.value(base.mixed).clone();

        let mut tape2 = Tape::new();
        let xr = tape2.leaf(x_rev);
        let swapped = BilmLayerNodes {
            forward: build(&mut tape2, &weights[1]),
            backward: build(&mut tape2, &weights[0]),
        };
        let logits2 = tape2.leaf(Tensor::zeros(1, 1));
        let rev = encode_bilm(&mut tape2, xr, &[swapped], logits2).unwrap();
        let rev_p = tape2.value(rev.mixed).clone();

        for i in 0..n {
            for j in 0..d {
                assert!((rev_p.get(i, j) - base_p.get(n - 1 - i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_mix_equal_logits_is_arithmetic_mean() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(1, 2, vec![2.0, 4.0]));
        let b = tape.leaf(Tensor::from_vec(1, 2, vec![6.0, 0.0]));
        let logits = tape.leaf(Tensor::zeros(1, 2));
        let mixed = layer_mix(&mut tape, &[a, b], logits).unwrap();
        assert_eq!(tape.value(mixed).data(), &[4.0, 2.0]);
    }

    #[test]
    fn layer_mix_saturated_logit_selects_layer() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(1, 2, vec![2.0, 4.0]));
        let b = tape.leaf(Tensor::from_vec(1, 2, vec![6.0, 0.0]));
        let logits = tape.leaf(Tensor::from_vec(1, 2, vec![1000.0, 0.0]));
        let mixed = layer_mix(&mut tape, &[a, b], logits).unwrap();
        for (m, e) in tape.value(mixed).data().iter().zip([2.0, 4.0]) {
            assert!((m - e).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_mix_empty_list_errors() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(1, 1));
        assert!(matches!(layer_mix(&mut tape, &[], logits), Err(EncoderError::NoLayers)));
    }

    fn build_encoder_params(
        kind: EncoderKind,
        cell: CellKind,
        layers: usize,
        d: usize,
        rng: &mut ChaCha20Rng,
    ) -> crate::optim::ParamSet {
        use crate::optim::ParamSet;
        let mut params = ParamSet::new();
        match kind {
            EncoderKind::Gcn => {
                for l in 0..layers {
                    params.push(alloc::format!("{l}.w1"), random_tensor(rng, d, d, 1.0));
                    params.push(alloc::format!("{l}.w2"), random_tensor(rng, d, d, 1.0));
                    params.push(alloc::format!("{l}.b"), random_tensor(rng, 1, d, 1.0));
                }
            }
            EncoderKind::Bilm => {
                for l in 0..layers {
                    for dir in ["f", "b"] {
                        for g in cell.gate_names() {
                            params.push(alloc::format!("{l}.{dir}.{g}.w"), random_tensor(rng, d, d, 1.0));
                            params.push(alloc::format!("{l}.{dir}.{g}.u"), random_tensor(rng, d, d, 1.0));
                            params.push(alloc::format!("{l}.{dir}.{g}.bias"), random_tensor(rng, 1, d, 1.0));
                        }
                    }
                }
            }
        }
        params.push(alloc::string::String::from("mix"), random_tensor(rng, 1, layers, 1.0));
        params
    }

    /// Wires an encoder forward pass from a ParamSet laid out by
    /// `build_encoder_params`; returns the scalar loss node
    /// `sum(mixed .* mixed)`.
    fn encoder_loss_node(
        tape: &mut Tape,
        params: &crate::optim::ParamSet,
        kind: EncoderKind,
        cell: CellKind,
        layers: usize,
        x_val: &Tensor,
        a_val: &Tensor,
    ) -> (Vec<NodeId>, NodeId) {
        let x = tape.leaf(x_val.clone());
        let bound: Vec<NodeId> = params.iter().map(|prm| tape.leaf(prm.value.clone())).collect();
        let mix = bound[params.len() - 1];
        let out = match kind {
            EncoderKind::Gcn => {
                let a = tape.leaf(a_val.clone());
                let nodes: Vec<GcnLayerNodes> = (0..layers)
                    .map(|l| GcnLayerNodes { w1: bound[3 * l], w2: bound[3 * l + 1], b: bound[3 * l + 2] })
                    .collect();
                encode_gcn(tape, x, a, &nodes, mix).unwrap()
            }
            EncoderKind::Bilm => {
                let gates = cell.gates();
                let per_dir = 3 * gates;
                let nodes: Vec<BilmLayerNodes> = (0..layers)
                    .map(|l| {
                        let base = 2 * per_dir * l;
                        let dir = |offset: usize| RnnCellNodes {
                            kind: cell,
                            w: (0..gates).map(|g| bound[base + offset + 3 * g]).collect(),
                            u: (0..gates).map(|g| bound[base + offset + 3 * g + 1]).collect(),
                            b: (0..gates).map(|g| bound[base + offset + 3 * g + 2]).collect(),
                        };
                        BilmLayerNodes { forward: dir(0), backward: dir(per_dir) }
                    })
                    .collect();
                encode_bilm(tape, x, &nodes, mix).unwrap()
            }
        };
        let sq = tape.hadamard(out.mixed, out.mixed).unwrap();
        let loss = tape.full_sum(sq);
        (bound, loss)
    }

    #[test]
    fn encoder_gradients_match_central_differences() {
        use crate::optim::{grad_check, GradCheckConfig};

        for (kind, cell) in [
            (EncoderKind::Gcn, CellKind::Gru),
            (EncoderKind::Bilm, CellKind::Gru),
            (EncoderKind::Bilm, CellKind::Lstm),
        ] {
            let n = 3;
            let d = 4;
            let layers = 2;
            let mut rng = ChaCha20Rng::seed_from_u64(20);
            let x_val = random_tensor(&mut rng, n, d, 1.0);
            let mut a_val = Tensor::zeros(n, n);
            a_val.set(0, 1, 0.7);
            a_val.set(1, 0, 0.7);
            a_val.set(1, 2, 0.7);
            a_val.set(2, 1, 0.7);

            let mut params = build_encoder_params(kind, cell, layers, d, &mut rng);

            // analytic gradients
            {
                let mut tape = Tape::new();
                let (bound, loss) = encoder_loss_node(&mut tape, &params, kind, cell, layers, &x_val, &a_val);
                tape.backward(loss).unwrap();
                for (idx, &node) in bound.iter().enumerate() {
                    params.get_mut(idx).grad = tape.grad(node).clone();
                }
            }

            let report = grad_check(
                |p: &crate::optim::ParamSet| {
                    let mut tape = Tape::new();
                    let (_, loss) = encoder_loss_node(&mut tape, p, kind, cell, layers, &x_val, &a_val);
                    tape.value(loss).scalar_value()
                },
                &mut params,
                &GradCheckConfig { max_coords_per_param: 6, seed: 13, ..Default::default() },
            );
            assert!(report.passed(), "{kind:?}/{cell:?}: max rel err {}", report.max_rel_err);
        }
    }
}
