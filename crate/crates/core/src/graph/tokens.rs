//! Circular substructure tokens: a stable 64-bit identifier per atom at
//! radius 0 (the atom's own invariants) and radius 1 (its bonded
//! neighborhood). These feed the skip-gram pretraining corpus and the
//! hashed fingerprint.

use alloc::vec::Vec;

use super::MolecularGraph;

/// Stable substructure identifier. Identical chemical environments hash to
/// identical tokens on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtomTokens {
    pub radius0: Token,
    pub radius1: Token,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Radius-0 and radius-1 tokens for every atom, in atom order.
///
/// Radius 0 hashes `(element, charge, aromatic, implicit_h, degree)`;
/// radius 1 hashes the radius-0 token together with the sorted multiset of
/// `(bond order, neighbor radius-0 token)` pairs.
pub fn atom_tokens(graph: &MolecularGraph) -> Vec<AtomTokens> {
    let n = graph.atom_count();
    let mut radius0 = Vec::with_capacity(n);
    for (i, a) in graph.atoms().iter().enumerate() {
        let charge_byte = (a.formal_charge.clamp(-127, 127) as i8) as u8;
        let bytes = [
            a.element.code(),
            charge_byte,
            u8::from(a.aromatic),
            a.implicit_h.min(255) as u8,
            graph.degree(i).min(255) as u8,
        ];
        radius0.push(Token(fnv1a(bytes)));
    }
    (0..n)
        .map(|i| {
            let mut env: Vec<(u8, u64)> = graph
                .neighbors(i)
                .iter()
                .map(|&(j, order)| (order.code(), radius0[j].0))
                .collect();
            env.sort_unstable();
            let mut bytes = Vec::with_capacity(8 + env.len() * 9);
            bytes.extend_from_slice(&radius0[i].0.to_le_bytes());
            for (code, tok) in env {
                bytes.push(code);
                bytes.extend_from_slice(&tok.to_le_bytes());
            }
            AtomTokens { radius0: radius0[i], radius1: Token(fnv1a(bytes)) }
        })
        .collect()
}

/// Token sequence of a molecule for pretraining: radius-0 and radius-1
/// tokens interleaved per atom, in atom order.
pub fn token_sentence(graph: &MolecularGraph) -> Vec<Token> {
    let mut out = Vec::with_capacity(graph.atom_count() * 2);
    for t in atom_tokens(graph) {
        out.push(t.radius0);
        out.push(t.radius1);
    }
    out
}

/// Order-independent hash of the token multiset; a cheap canonical key for
/// grouping identical structures.
pub fn token_multiset_key(graph: &MolecularGraph) -> u64 {
    let mut tokens = token_sentence(graph);
    tokens.sort_unstable();
    fnv1a(tokens.iter().flat_map(|t| t.0.to_le_bytes()))
}
