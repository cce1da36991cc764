//! The interaction map between solvent and solute feature matrices, the
//! solvation-energy readout, molecular feature vectors, and the
//! group-contribution marginals.
//!
//! Entry `(a, g)` of the map is `-(p_a . q_g)` in kcal/mol; the predicted
//! solvation free energy is the sum of all entries. The sign convention
//! makes the molecular-vector identity hold verbatim: with `u = sum_a p_a`
//! and `v = -sum_g q_g`, `u . v` equals the map total exactly.

use alloc::vec::Vec;

use crate::tensor::{ShapeError, Tensor};

/// Pairwise atomic interaction terms: `n_solvent x n_solute`, kcal/mol.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMap {
    entries: Tensor,
}

impl InteractionMap {
    pub fn solvent_atom_count(&self) -> usize {
        self.entries.rows()
    }

    pub fn solute_atom_count(&self) -> usize {
        self.entries.cols()
    }

    /// Interaction of solvent atom `a` with solute atom `g`.
    pub fn get(&self, a: usize, g: usize) -> f64 {
        self.entries.get(a, g)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.entries
    }
}

/// Per-atom attribution of the prediction: each marginal of the interaction
/// map sums to the total free energy.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupContributions {
    /// Per solute atom: sum of its column over all solvent atoms.
    pub solute: Vec<f64>,
    /// Per solvent atom: sum of its row over all solute atoms.
    pub solvent: Vec<f64>,
}

/// Everything one prediction yields: the energy, the map, the molecular
/// feature vectors and both marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvationPrediction {
    /// Predicted solvation free energy, kcal/mol.
    pub delta_g: f64,
    pub map: InteractionMap,
    /// Solvent molecular feature vector (sum of solvent atom features).
    pub u: Vec<f64>,
    /// Solute molecular feature vector (negated sum of solute atom
    /// features, so `delta_g = u . v`).
    pub v: Vec<f64>,
    pub solute_contributions: Vec<f64>,
    pub solvent_contributions: Vec<f64>,
}

impl SolvationPrediction {
    /// Builds the full prediction from feature matrices.
    pub fn from_features(p: &Tensor, q: &Tensor) -> Result<Self, ShapeError> {
        let map = interaction_map(p, q)?;
        let delta_g = solvation_energy(&map);
        let (u, v) = molecular_vectors(p, q);
        let contributions = group_contributions(&map);
        Ok(SolvationPrediction {
            delta_g,
            map,
            u,
            v,
            solute_contributions: contributions.solute,
            solvent_contributions: contributions.solvent,
        })
    }
}

/// `I = -P . Q^T`: the negated dot products of solvent and solute atom
/// features.
pub fn interaction_map(p: &Tensor, q: &Tensor) -> Result<InteractionMap, ShapeError> {
    if p.cols() != q.cols() {
        return Err(ShapeError { op: "interaction_map", lhs: p.shape(), rhs: q.shape() });
    }
    let entries = p.matmul(&q.transpose())?.scale(-1.0);
    Ok(InteractionMap { entries })
}

/// Total solvation free energy: the sum of every map entry, kcal/mol.
pub fn solvation_energy(map: &InteractionMap) -> f64 {
    map.entries.sum()
}

/// Molecular feature vectors `(u, v)` with `u = sum_a p_a` and
/// `v = -sum_g q_g`; their dot product equals the map total.
pub fn molecular_vectors(p: &Tensor, q: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let u = p.col_sums().data().to_vec();
    let v = q.col_sums().scale(-1.0).data().to_vec();
    (u, v)
}

/// Marginal sums of the interaction map; each vector sums to the total
/// energy.
pub fn group_contributions(map: &InteractionMap) -> GroupContributions {
    GroupContributions {
        solute: map.entries.col_sums().data().to_vec(),
        solvent: map.entries.row_sums().data().to_vec(),
    }
}
