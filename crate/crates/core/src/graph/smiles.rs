//! SMILES parser for the supported subset: the ten elements written bare
//! (organic subset) or in brackets with charge and explicit hydrogen counts,
//! aromatic lowercase atoms, bonds `- = # :`, branches, and ring closures
//! `1`-`9` / `%nn`. Stereochemistry, isotopes and multi-fragment inputs are
//! rejected with explicit errors rather than silently stripped.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported SMILES feature at offset {offset}: {feature}")]
    Unsupported { offset: usize, feature: String },
    #[error("multi-fragment SMILES at offset {offset}: '.' separators are not supported")]
    MultiFragment { offset: usize },
}

impl SmilesError {
    pub fn offset(&self) -> usize {
        match self {
            SmilesError::Parse { offset, .. }
            | SmilesError::Unsupported { offset, .. }
            | SmilesError::MultiFragment { offset } => *offset,
        }
    }

    /// True for inputs that use valid SMILES syntax outside the supported
    /// subset (stereo markers, isotopes, elements beyond the ten).
    pub fn is_unsupported_feature(&self) -> bool {
        matches!(self, SmilesError::Unsupported { .. })
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> SmilesError {
    SmilesError::Parse { offset, message: message.into() }
}

fn unsupported(offset: usize, feature: impl Into<String>) -> SmilesError {
    SmilesError::Unsupported { offset, feature: feature.into() }
}

struct ParsedAtom {
    element: Element,
    charge: i32,
    aromatic: bool,
    /// `Some` for bracket atoms (explicit hydrogen count), `None` for bare
    /// atoms whose hydrogens are derived from valence.
    explicit_h: Option<u32>,
}

struct RingOpen {
    atom: usize,
    bond: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<ParsedAtom>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending_bond: Option<(BondOrder, usize)>,
    branch_stack: Vec<(usize, usize)>,
    rings: BTreeMap<u32, RingOpen>,
}

/// Parses a SMILES string into a heavy-atom [`MolecularGraph`].
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(parse_err(0, "empty SMILES"));
    }
    if !trimmed.is_ascii() {
        return Err(parse_err(0, "SMILES must be ASCII"));
    }
    let mut parser = Parser {
        bytes: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending_bond: None,
        branch_stack: Vec::new(),
        rings: BTreeMap::new(),
    };
    parser.run()?;
    parser.finish(trimmed)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    if self.pending_bond.is_some() {
                        return Err(parse_err(at, "bond symbol before '('"));
                    }
                    match self.prev {
                        Some(p) => self.branch_stack.push((p, at)),
                        None => return Err(parse_err(at, "branch opened before any atom")),
                    }
                    self.pos += 1;
                }
                b')' => {
                    if self.pending_bond.is_some() {
                        return Err(parse_err(at, "bond symbol before ')'"));
                    }
                    match self.branch_stack.pop() {
                        Some((p, _)) => self.prev = Some(p),
                        None => return Err(parse_err(at, "unmatched ')'")),
                    }
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending_bond.is_some() {
                        return Err(parse_err(at, "two bond symbols in a row"));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending_bond = Some((order, at));
                    self.pos += 1;
                }
                b'/' | b'\\' => return Err(unsupported(at, "stereo bond marker")),
                b'@' => return Err(unsupported(at, "stereochemistry")),
                b'.' => return Err(SmilesError::MultiFragment { offset: at }),
                b'%' => {
                    let d1 = self.bytes.get(at + 1).copied();
                    let d2 = self.bytes.get(at + 2).copied();
                    match (d1, d2) {
                        (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                            let num = u32::from((a - b'0') * 10 + (b - b'0'));
                            self.pos += 3;
                            self.ring_closure(num, at)?;
                        }
                        _ => return Err(parse_err(at, "'%' must be followed by two digits")),
                    }
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure(u32::from(c - b'0'), at)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, at)?;
                }
                b'*' => return Err(unsupported(at, "wildcard atom '*'")),
                _ if c.is_ascii_uppercase() => {
                    let atom = self.bare_atom()?;
                    self.add_atom(atom, at)?;
                }
                _ if c.is_ascii_lowercase() => {
                    let element = match c {
                        b'c' => Element::C,
                        b'n' => Element::N,
                        b'o' => Element::O,
                        b'p' => Element::P,
                        b's' => Element::S,
                        _ => return Err(unsupported(at, format!("aromatic element '{}'", c as char))),
                    };
                    self.pos += 1;
                    self.add_atom(
                        ParsedAtom { element, charge: 0, aromatic: true, explicit_h: None },
                        at,
                    )?;
                }
                _ => return Err(parse_err(at, format!("unexpected character '{}'", c as char))),
            }
        }
        Ok(())
    }

    fn bare_atom(&mut self) -> Result<ParsedAtom, SmilesError> {
        let at = self.pos;
        let c = self.bytes[at];
        let next = self.bytes.get(at + 1).copied();
        let (element, len) = match (c, next) {
            (b'C', Some(b'l')) => (Element::Cl, 2),
            (b'B', Some(b'r')) => (Element::Br, 2),
            (b'C', _) => (Element::C, 1),
            (b'N', _) => (Element::N, 1),
            (b'O', _) => (Element::O, 1),
            (b'P', _) => (Element::P, 1),
            (b'S', _) => (Element::S, 1),
            (b'F', _) => (Element::F, 1),
            (b'I', _) => (Element::I, 1),
            (b'H', _) => {
                return Err(parse_err(at, "hydrogen must be written as a bracket atom"));
            }
            _ => return Err(unsupported(at, format!("element '{}'", c as char))),
        };
        self.pos += len;
        Ok(ParsedAtom { element, charge: 0, aromatic: false, explicit_h: None })
    }

    fn bracket_atom(&mut self) -> Result<ParsedAtom, SmilesError> {
        let open = self.pos;
        self.pos += 1; // consume '['
        if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            return Err(unsupported(self.pos, "isotope specification"));
        }
        let (element, aromatic) = self.bracket_element()?;
        let mut explicit_h: u32 = 0;
        let mut charge: i32 = 0;
        loop {
            let at = self.pos;
            match self.peek() {
                Some(b']') => {
                    self.pos += 1;
                    break;
                }
                Some(b'@') => return Err(unsupported(at, "stereochemistry")),
                Some(b'H') => {
                    self.pos += 1;
                    explicit_h = self.read_number().unwrap_or(1);
                }
                Some(sign @ (b'+' | b'-')) => {
                    if charge != 0 {
                        return Err(parse_err(at, "multiple charge groups in bracket atom"));
                    }
                    self.pos += 1;
                    let magnitude = if let Some(n) = self.read_number() {
                        n as i32
                    } else {
                        // count repeated signs: ++ is +2
                        let mut m = 1;
                        while self.peek() == Some(sign) {
                            m += 1;
                            self.pos += 1;
                        }
                        m
                    };
                    charge = if sign == b'+' { magnitude } else { -magnitude };
                }
                Some(b':') => return Err(unsupported(at, "atom map")),
                Some(c) => {
                    return Err(parse_err(at, format!("unexpected character '{}' in bracket atom", c as char)))
                }
                None => return Err(parse_err(open, "unterminated bracket atom")),
            }
        }
        Ok(ParsedAtom { element, charge, aromatic, explicit_h: Some(explicit_h) })
    }

    fn bracket_element(&mut self) -> Result<(Element, bool), SmilesError> {
        let at = self.pos;
        let c = self.peek().ok_or_else(|| parse_err(at, "unterminated bracket atom"))?;
        if c.is_ascii_uppercase() {
            // try the two-letter symbols first
            if let Some(next) = self.bytes.get(at + 1).copied() {
                if next.is_ascii_lowercase() && next != b'h' {
                    let symbol = &self.bytes[at..at + 2];
                    let symbol = core::str::from_utf8(symbol).unwrap();
                    // 'H' count markers follow the element, so only consume
                    // the pair when it forms a known or plausible symbol
                    if let Some(e) = Element::from_symbol(symbol) {
                        self.pos += 2;
                        return Ok((e, false));
                    }
                    return Err(unsupported(at, format!("element '{symbol}'")));
                }
            }
            let symbol = core::str::from_utf8(&self.bytes[at..at + 1]).unwrap();
            let e = Element::from_symbol(symbol)
                .ok_or_else(|| unsupported(at, format!("element '{symbol}'")))?;
            self.pos += 1;
            Ok((e, false))
        } else if c.is_ascii_lowercase() {
            let element = match c {
                b'c' => Element::C,
                b'n' => Element::N,
                b'o' => Element::O,
                b'p' => Element::P,
                b's' => Element::S,
                _ => return Err(unsupported(at, format!("aromatic element '{}'", c as char))),
            };
            self.pos += 1;
            Ok((element, true))
        } else {
            Err(parse_err(at, format!("expected element symbol, found '{}'", c as char)))
        }
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        core::str::from_utf8(&self.bytes[start..self.pos]).unwrap().parse().ok()
    }

    fn add_atom(&mut self, atom: ParsedAtom, offset: usize) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        let aromatic = atom.aromatic;
        self.atoms.push(atom);
        if let Some(p) = self.prev {
            let order = match self.pending_bond.take() {
                Some((o, _)) => o,
                None => {
                    if aromatic && self.atoms[p].aromatic {
                        BondOrder::Aromatic
                    } else {
                        BondOrder::Single
                    }
                }
            };
            self.bonds.push(Bond { i: p, j: idx, order });
        } else if let Some((_, bond_at)) = self.pending_bond.take() {
            return Err(parse_err(bond_at, "bond before the first atom"));
        }
        let _ = offset;
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self, num: u32, offset: usize) -> Result<(), SmilesError> {
        let p = self
            .prev
            .ok_or_else(|| parse_err(offset, "ring closure digit before any atom"))?;
        match self.rings.remove(&num) {
            Some(open) => {
                if open.atom == p {
                    return Err(parse_err(offset, "ring bond connects an atom to itself"));
                }
                let closing = self.pending_bond.take().map(|(o, _)| o);
                let order = match (open.bond, closing) {
                    (None, None) => {
                        if self.atoms[open.atom].aromatic && self.atoms[p].aromatic {
                            BondOrder::Aromatic
                        } else {
                            BondOrder::Single
                        }
                    }
                    (Some(o), None) | (None, Some(o)) => o,
                    (Some(a), Some(b)) if a == b => a,
                    (Some(_), Some(_)) => {
                        return Err(parse_err(offset, format!("ring closure {num} bond order mismatch")))
                    }
                };
                if self
                    .bonds
                    .iter()
                    .any(|b| (b.i == p && b.j == open.atom) || (b.i == open.atom && b.j == p))
                {
                    return Err(parse_err(offset, "duplicate bond via ring closure"));
                }
                self.bonds.push(Bond { i: open.atom, j: p, order });
            }
            None => {
                let bond = self.pending_bond.take().map(|(o, _)| o);
                self.rings.insert(num, RingOpen { atom: p, bond, offset });
            }
        }
        Ok(())
    }

    fn finish(mut self, source: &str) -> Result<MolecularGraph, SmilesError> {
        if let Some((_, at)) = self.pending_bond {
            return Err(parse_err(at, "dangling bond at end of input"));
        }
        if let Some(&(_, at)) = self.branch_stack.first() {
            return Err(parse_err(at, "unclosed '('"));
        }
        if let Some(open) = self.rings.values().min_by_key(|o| o.offset) {
            return Err(parse_err(open.offset, "unmatched ring closure digit"));
        }
        if self.atoms.is_empty() {
            return Err(parse_err(0, "SMILES contains no atoms"));
        }

        // Bond-order sums in half units (aromatic counts 1.5) per atom.
        let mut half_sums = alloc::vec![0u32; self.atoms.len()];
        for b in &self.bonds {
            half_sums[b.i] += b.order.half_units();
            half_sums[b.j] += b.order.half_units();
        }

        // Implicit hydrogens: bracket atoms carry their explicit count; bare
        // atoms get standard valence minus the bond-order sum, floored at 0.
        let mut implicit: Vec<u32> = Vec::with_capacity(self.atoms.len());
        for (i, a) in self.atoms.iter().enumerate() {
            let h = match a.explicit_h {
                Some(h) => h,
                None => {
                    let capacity = 2 * a.element.standard_valence() as i64 - half_sums[i] as i64;
                    if capacity > 0 {
                        (capacity / 2) as u32
                    } else {
                        0
                    }
                }
            };
            implicit.push(h);
        }

        // Fold explicit [H] nodes into the implicit count of their heavy
        // neighbor; the graph keeps heavy atoms only.
        let mut bond_partners: Vec<Vec<(usize, BondOrder)>> = alloc::vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            bond_partners[b.i].push((b.j, b.order));
            bond_partners[b.j].push((b.i, b.order));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.element != Element::H {
                continue;
            }
            if a.charge != 0 {
                return Err(unsupported(0, "charged hydrogen atom"));
            }
            if implicit[i] != 0 {
                return Err(unsupported(0, "hydrogen with attached hydrogens"));
            }
            match bond_partners[i].as_slice() {
                [(j, BondOrder::Single)] if self.atoms[*j].element != Element::H => {
                    implicit[*j] += 1;
                }
                _ => return Err(unsupported(0, "explicit hydrogen arrangement")),
            }
        }

        let mut index_map = alloc::vec![usize::MAX; self.atoms.len()];
        let mut atoms = Vec::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if a.element == Element::H {
                continue;
            }
            index_map[i] = atoms.len();
            atoms.push(Atom {
                element: a.element,
                formal_charge: a.charge,
                aromatic: a.aromatic,
                implicit_h: implicit[i],
            });
        }
        if atoms.is_empty() {
            return Err(unsupported(0, "molecule with no heavy atoms"));
        }
        let bonds: Vec<Bond> = self
            .bonds
            .drain(..)
            .filter(|b| self.atoms[b.i].element != Element::H && self.atoms[b.j].element != Element::H)
            .map(|b| Bond { i: index_map[b.i], j: index_map[b.j], order: b.order })
            .collect();

        MolecularGraph::new(atoms, bonds, source.to_string())
            .map_err(|e| parse_err(0, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn water_is_one_atom_two_hydrogens() {
        let g = parse_smiles("O").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.bonds().len(), 0);
        let a = g.atom(0);
        assert_eq!(a.element, Element::O);
        assert_eq!(a.implicit_h, 2);
        assert!(!a.aromatic);
    }

    #[test]
    fn benzene_is_aromatic_ring() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bonds().len(), 6);
        for a in g.atoms() {
            assert_eq!(a.element, Element::C);
            assert!(a.aromatic);
            assert_eq!(a.implicit_h, 1);
        }
        for b in g.bonds() {
            assert_eq!(b.order, BondOrder::Aromatic);
        }
        for i in 0..6 {
            assert_eq!(g.degree(i), 2);
        }
    }

    #[test]
    fn hexane_is_a_chain() {
        let g = parse_smiles("CCCCCC").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bonds().len(), 5);
        for (k, b) in g.bonds().iter().enumerate() {
            assert_eq!((b.i, b.j, b.order), (k, k + 1, BondOrder::Single));
        }
        assert_eq!(g.atom(0).implicit_h, 3);
        assert_eq!(g.atom(1).implicit_h, 2);
    }

    #[test]
    fn unbalanced_branch_errors_at_offset() {
        let err = parse_smiles("C(").unwrap_err();
        assert_eq!(err.offset(), 1);
        assert!(matches!(err, SmilesError::Parse { .. }));
    }

    #[test]
    fn unmatched_ring_digit_errors_at_offset() {
        let err = parse_smiles("C1CC").unwrap_err();
        assert_eq!(err.offset(), 1);
        assert!(matches!(err, SmilesError::Parse { .. }));
    }

    #[test]
    fn stereo_markers_are_unsupported() {
        for s in ["C[C@H](N)O", "F/C=C/F", "F\\C=C\\F"] {
            let err = parse_smiles(s).unwrap_err();
            assert!(err.is_unsupported_feature(), "{s}: {err}");
        }
    }

    #[test]
    fn fragment_separator_rejected() {
        let err = parse_smiles("C.C").unwrap_err();
        assert_eq!(err, SmilesError::MultiFragment { offset: 1 });
    }

    #[test]
    fn unsupported_elements_rejected() {
        for s in ["[Na]", "B", "[Si]", "b1bbbb1"] {
            let err = parse_smiles(s).unwrap_err();
            assert!(err.is_unsupported_feature(), "{s}: {err}");
        }
    }

    #[test]
    fn bracket_charges_and_hydrogens() {
        let g = parse_smiles("[NH4+]").unwrap();
        let a = g.atom(0);
        assert_eq!(a.element, Element::N);
        assert_eq!(a.formal_charge, 1);
        assert_eq!(a.implicit_h, 4);

        let g = parse_smiles("CC(=O)[O-]").unwrap();
        let o = g.atom(3);
        assert_eq!(o.formal_charge, -1);
        assert_eq!(o.implicit_h, 0);

        let g = parse_smiles("[O--]").unwrap();
        assert_eq!(g.atom(0).formal_charge, -2);
        let g = parse_smiles("[O-2]").unwrap();
        assert_eq!(g.atom(0).formal_charge, -2);
    }

    #[test]
    fn explicit_hydrogen_atoms_fold_into_counts() {
        let g = parse_smiles("C([H])([H])[H]").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.atom(0).implicit_h, 4); // one computed + three folded
        assert_eq!(g.bonds().len(), 0);

        let err = parse_smiles("[H][H]").unwrap_err();
        assert!(err.is_unsupported_feature());
    }

    #[test]
    fn aromatic_nitrogen_hydrogens() {
        // pyridine: no H on the nitrogen
        let g = parse_smiles("c1ccncc1").unwrap();
        let n = g.atoms().iter().find(|a| a.element == Element::N).unwrap();
        assert_eq!(n.implicit_h, 0);
        // pyrrole: bracket [nH]
        let g = parse_smiles("c1cc[nH]c1").unwrap();
        let n = g.atoms().iter().find(|a| a.element == Element::N).unwrap();
        assert_eq!(n.implicit_h, 1);
        assert!(n.aromatic);
    }

    #[test]
    fn substituted_aromatic_carbon_has_no_hydrogen() {
        let g = parse_smiles("Cc1ccccc1").unwrap();
        assert_eq!(g.atom(0).implicit_h, 3);
        assert_eq!(g.atom(1).implicit_h, 0); // ipso carbon
        assert_eq!(g.atom(2).implicit_h, 1);
    }

    #[test]
    fn hypervalent_sulfur_floors_at_zero() {
        let g = parse_smiles("CS(=O)(=O)C").unwrap();
        let s = g.atoms().iter().find(|a| a.element == Element::S).unwrap();
        assert_eq!(s.implicit_h, 0);
    }

    #[test]
    fn ring_bond_order_agreement() {
        let g = parse_smiles("C=1CCCCC=1").unwrap();
        assert!(g.bonds().iter().any(|b| b.order == BondOrder::Double));
        let err = parse_smiles("C=1CCCCC-1").unwrap_err();
        assert!(matches!(err, SmilesError::Parse { .. }));
    }

    #[test]
    fn percent_ring_closures() {
        let g = parse_smiles("C%12CCCCC%12").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bonds().len(), 6);
    }

    #[test]
    fn duplicate_ring_bond_rejected() {
        let err = parse_smiles("C12CC12").unwrap_err();
        assert!(matches!(err, SmilesError::Parse { .. }));
    }

    #[test]
    fn bond_symbol_misuse_rejected() {
        assert!(parse_smiles("C=").is_err());
        assert!(parse_smiles("=C").is_err());
        assert!(parse_smiles("C=(C)").is_err());
        assert!(parse_smiles("C=#C").is_err());
    }

    #[test]
    fn triple_bond_and_explicit_single() {
        let g = parse_smiles("CC#N").unwrap();
        assert_eq!(g.bonds()[1].order, BondOrder::Triple);
        assert_eq!(g.atom(1).implicit_h, 0);
        let g = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        let cross: Vec<_> = g.bonds().iter().filter(|b| b.order == BondOrder::Single).collect();
        assert_eq!(cross.len(), 1);
    }

    #[test]
    fn isotopes_and_atom_maps_rejected() {
        assert!(parse_smiles("[13C]").unwrap_err().is_unsupported_feature());
        assert!(parse_smiles("[CH4:1]").unwrap_err().is_unsupported_feature());
    }
}
