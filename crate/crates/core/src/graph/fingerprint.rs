//! Hashed circular fingerprint over the radius-0/1 substructure tokens.

use alloc::vec;
use alloc::vec::Vec;

use super::tokens::atom_tokens;
use super::MolecularGraph;

pub const DEFAULT_FINGERPRINT_BITS: usize = 1024;

/// Fixed-length bit vector; bit `token % nbits` is set for every
/// substructure token of the molecule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    blocks: Vec<u64>,
    nbits: usize,
}

impl Fingerprint {
    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.nbits);
        self.blocks[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn popcount(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Bits as 0.0/1.0 reals, for clustering.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.nbits).map(|i| if self.bit(i) { 1.0 } else { 0.0 }).collect()
    }

    fn set_bit(&mut self, i: usize) {
        self.blocks[i / 64] |= 1u64 << (i % 64);
    }
}

/// Hashed circular fingerprint of a molecule. `nbits` must be at least 64.
pub fn fingerprint(graph: &MolecularGraph, nbits: usize) -> Fingerprint {
    assert!(nbits >= 64, "fingerprint length must be at least 64 bits");
    let mut fp = Fingerprint { blocks: vec![0u64; nbits.div_ceil(64)], nbits };
    for t in atom_tokens(graph) {
        fp.set_bit((t.radius0.0 % nbits as u64) as usize);
        fp.set_bit((t.radius1.0 % nbits as u64) as usize);
    }
    fp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_smiles;

    #[test]
    fn benzene_sets_at_most_two_bits() {
        let g = parse_smiles("c1ccccc1").unwrap();
        let fp = fingerprint(&g, 1024);
        assert!(fp.popcount() >= 1);
        assert!(fp.popcount() <= 2);
    }

    #[test]
    fn deterministic_across_parses() {
        let a = fingerprint(&parse_smiles("CCOC(C)=O").unwrap(), 1024);
        let b = fingerprint(&parse_smiles("CCOC(C)=O").unwrap(), 1024);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_structures_differ() {
        let hexane = fingerprint(&parse_smiles("CCCCCC").unwrap(), 1024);
        let benzene = fingerprint(&parse_smiles("c1ccccc1").unwrap(), 1024);
        assert_ne!(hexane, benzene);
    }

    #[test]
    fn pure_function_of_token_multiset() {
        let g = parse_smiles("CC(C)CO").unwrap();
        let p = g.permuted(&[4, 2, 0, 1, 3]).unwrap();
        assert_eq!(fingerprint(&g, 256), fingerprint(&p, 256));
    }

    #[test]
    #[should_panic(expected = "at least 64")]
    fn tiny_fingerprints_rejected() {
        let g = parse_smiles("C").unwrap();
        let _ = fingerprint(&g, 32);
    }
}
