//! Heavy-atom molecular graphs parsed from SMILES, plus the adjacency
//! machinery, substructure tokens and fingerprints consumed by the rest of
//! the pipeline.
//!
//! Hydrogens are stored as implicit counts on heavy atoms; the graph holds
//! heavy atoms only.

mod fingerprint;
mod smiles;
mod tokens;

pub use fingerprint::{fingerprint, Fingerprint, DEFAULT_FINGERPRINT_BITS};
pub use smiles::{parse_smiles, SmilesError};
pub use tokens::{atom_tokens, token_multiset_key, token_sentence, AtomTokens, Token};

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::tensor::Tensor;

/// The ten supported elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Some(match s {
            "H" => Element::H,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => return None,
        })
    }

    /// Usual organic valence used for implicit hydrogen counting.
    pub fn standard_valence(self) -> u32 {
        match self {
            Element::H => 1,
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::P => 3,
            Element::S => 2,
            Element::F | Element::Cl | Element::Br | Element::I => 1,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Element::H => 0,
            Element::C => 1,
            Element::N => 2,
            Element::O => 3,
            Element::P => 4,
            Element::S => 5,
            Element::F => 6,
            Element::Cl => 7,
            Element::Br => 8,
            Element::I => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order in half units (aromatic counts as 1.5) for valence sums.
    pub(crate) fn half_units(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

/// A heavy atom: element, formal charge, aromatic flag and the number of
/// implicit hydrogens attached to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i32,
    pub aromatic: bool,
    pub implicit_h: u32,
}

/// Undirected bond between atom indices `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("molecular graph must contain at least one atom")]
    Empty,
    #[error("bond ({i}, {j}) references an atom outside 0..{atoms}")]
    IndexOutOfRange { i: usize, j: usize, atoms: usize },
    #[error("bond ({0}, {0}) is a self loop")]
    SelfLoop(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
}

/// Heavy-atom molecular graph with a symmetric bond structure.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    neighbors: Vec<Vec<(usize, BondOrder)>>,
    smiles_source: String,
}

impl MolecularGraph {
    /// Validates the bond list (indices in range, no self loops, no
    /// duplicate pairs) and builds the neighbor lists.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>, smiles_source: String) -> Result<Self, GraphError> {
        if atoms.is_empty() {
            return Err(GraphError::Empty);
        }
        let n = atoms.len();
        let mut neighbors: Vec<Vec<(usize, BondOrder)>> = alloc::vec![Vec::new(); n];
        for b in &bonds {
            if b.i >= n || b.j >= n {
                return Err(GraphError::IndexOutOfRange { i: b.i, j: b.j, atoms: n });
            }
            if b.i == b.j {
                return Err(GraphError::SelfLoop(b.i));
            }
            if neighbors[b.i].iter().any(|&(j, _)| j == b.j) {
                return Err(GraphError::DuplicateBond(b.i, b.j));
            }
            neighbors[b.i].push((b.j, b.order));
            neighbors[b.j].push((b.i, b.order));
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(MolecularGraph { atoms, bonds, neighbors, smiles_source })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn smiles_source(&self) -> &str {
        &self.smiles_source
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Neighbors of atom `i` in ascending index order.
    pub fn neighbors(&self, i: usize) -> &[(usize, BondOrder)] {
        &self.neighbors[i]
    }

    /// Dense symmetric adjacency with zero diagonal; bonded entries are 1.
    pub fn adjacency(&self) -> Tensor {
        let n = self.atoms.len();
        let mut a = Tensor::zeros(n, n);
        for b in &self.bonds {
            a.set(b.i, b.j, 1.0);
            a.set(b.j, b.i, 1.0);
        }
        a
    }

    /// Symmetrically degree-normalized adjacency: entry `(i, j)` is
    /// `1 / sqrt(d_i d_j)` when atoms i and j are bonded and 0 otherwise.
    /// Rows and columns of degree-zero atoms are all zero, so a single-atom
    /// molecule yields the 1x1 zero matrix.
    pub fn propagation_matrix(&self) -> Tensor {
        let n = self.atoms.len();
        let inv_sqrt_deg: Vec<f64> = (0..n)
            .map(|i| {
                let d = self.degree(i);
                if d == 0 {
                    0.0
                } else {
                    1.0 / libm::sqrt(d as f64)
                }
            })
            .collect();
        let mut a = Tensor::zeros(n, n);
        for b in &self.bonds {
            let v = inv_sqrt_deg[b.i] * inv_sqrt_deg[b.j];
            a.set(b.i, b.j, v);
            a.set(b.j, b.i, v);
        }
        a
    }

    /// Applies an atom permutation: atom `i` of the result is atom
    /// `perm[i]` of the original. Intended for equivariance checks.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length mismatch");
        let mut inverse = alloc::vec![0usize; perm.len()];
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            inverse[old_idx] = new_idx;
        }
        let atoms = perm.iter().map(|&old| self.atoms[old]).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond { i: inverse[b.i], j: inverse[b.j], order: b.order })
            .collect();
        MolecularGraph::new(atoms, bonds, self.smiles_source.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn carbon() -> Atom {
        Atom { element: Element::C, formal_charge: 0, aromatic: false, implicit_h: 3 }
    }

    #[test]
    fn rejects_empty_and_bad_bonds() {
        assert_eq!(MolecularGraph::new(vec![], vec![], String::new()).unwrap_err(), GraphError::Empty);
        let atoms = vec![carbon(), carbon()];
        let err = MolecularGraph::new(atoms.clone(), vec![Bond { i: 0, j: 2, order: BondOrder::Single }], String::new())
            .unwrap_err();
        assert!(matches!(err, GraphError::IndexOutOfRange { .. }));
        let err = MolecularGraph::new(atoms.clone(), vec![Bond { i: 1, j: 1, order: BondOrder::Single }], String::new())
            .unwrap_err();
        assert_eq!(err, GraphError::SelfLoop(1));
        let err = MolecularGraph::new(
            atoms,
            vec![
                Bond { i: 0, j: 1, order: BondOrder::Single },
                Bond { i: 1, j: 0, order: BondOrder::Double },
            ],
            String::new(),
        )
        .unwrap_err();
        assert_eq!(err, GraphError::DuplicateBond(1, 0));
    }

    #[test]
    fn propagation_matrix_two_bonded_atoms() {
        let g = MolecularGraph::new(
            vec![carbon(), carbon()],
            vec![Bond { i: 0, j: 1, order: BondOrder::Single }],
            "CC".to_string(),
        )
        .unwrap();
        let a = g.propagation_matrix();
        assert_eq!(a.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn propagation_matrix_single_atom_is_zero() {
        let g = MolecularGraph::new(
            vec![Atom { element: Element::O, formal_charge: 0, aromatic: false, implicit_h: 2 }],
            vec![],
            "O".to_string(),
        )
        .unwrap();
        let a = g.propagation_matrix();
        assert_eq!(a.shape(), (1, 1));
        assert_eq!(a.get(0, 0), 0.0);
    }
}
