//! SMILES reader for the organic subset plus bracket atoms, and a writer that
//! emits randomized (non-canonical) spellings of a parsed graph.
//!
//! Stereo markers (`/`, `\`, `@`) are accepted and dropped. Aromaticity is
//! taken from lowercase symbols as written; there is no perception step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use super::elements::{self, HYDROGEN};
use super::{Atom, Bond, BondOrder, ChemError, Molecule};

struct PendingRing {
    atom: usize,
    order: Option<BondOrder>,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    rings: BTreeMap<u16, PendingRing>,
    branch_stack: Vec<(usize, usize)>,
    prev: Option<usize>,
    pending_bond: Option<(BondOrder, usize)>,
}

/// Parses a SMILES string into a molecular graph with implicit hydrogens
/// filled for organic-subset atoms.
///
/// Valence is not enforced here; call [`Molecule::validate_valence`].
pub fn parse_smiles(text: &str) -> Result<Molecule, ChemError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ChemError::EmptyInput);
    }
    let mut p = Parser {
        text: trimmed,
        bytes: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        rings: BTreeMap::new(),
        branch_stack: Vec::new(),
        prev: None,
        pending_bond: None,
    };
    p.run()?;
    let Parser { mut atoms, bonds, .. } = p;
    fill_implicit_h(&mut atoms, &bonds);
    Ok(Molecule::from_parts(atoms, bonds, trimmed.to_string()))
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), ChemError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(ChemError::UnbalancedParenthesis(start));
                    };
                    if self.pending_bond.is_some() {
                        return Err(ChemError::InvalidBond { pos: start, reason: "bond before branch" });
                    }
                    self.branch_stack.push((prev, start));
                    self.pos += 1;
                }
                b')' => {
                    let Some((atom, _)) = self.branch_stack.pop() else {
                        return Err(ChemError::UnbalancedParenthesis(start));
                    };
                    if self.pending_bond.is_some() {
                        return Err(ChemError::InvalidBond { pos: start, reason: "dangling bond" });
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending_bond.is_some() {
                        return Err(ChemError::InvalidBond { pos: start, reason: "consecutive bond symbols" });
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    self.pending_bond = Some((order, start));
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending_bond.is_some() {
                        return Err(ChemError::InvalidBond { pos: start, reason: "bond before '.'" });
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, start)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom, start)?;
                }
            }
        }
        if let Some(&(_, pos)) = self.branch_stack.last() {
            return Err(ChemError::UnbalancedParenthesis(pos));
        }
        if let Some((&digit, _)) = self.rings.iter().next() {
            return Err(ChemError::UnclosedRing(digit));
        }
        if let Some((_, pos)) = self.pending_bond {
            return Err(ChemError::InvalidBond { pos, reason: "dangling bond" });
        }
        if self.atoms.is_empty() {
            return Err(ChemError::EmptyInput);
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, pos: usize) -> Result<(), ChemError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let explicit = self.pending_bond.take().map(|(o, _)| o);
            self.connect(prev, idx, explicit, pos)?;
        } else if let Some((_, bpos)) = self.pending_bond {
            return Err(ChemError::InvalidBond { pos: bpos, reason: "bond without preceding atom" });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn connect(&mut self, a: usize, b: usize, explicit: Option<BondOrder>, pos: usize) -> Result<(), ChemError> {
        if a == b {
            return Err(ChemError::InvalidBond { pos, reason: "atom bonded to itself" });
        }
        if self.bonds.iter().any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a)) {
            return Err(ChemError::InvalidBond { pos, reason: "duplicate bond" });
        }
        let both_aromatic = self.atoms[a].aromatic && self.atoms[b].aromatic;
        let order = match explicit {
            Some(BondOrder::Aromatic) if !both_aromatic => {
                return Err(ChemError::InvalidBond { pos, reason: "aromatic bond between non-aromatic atoms" })
            }
            Some(o) => o,
            None if both_aromatic => BondOrder::Aromatic,
            None => BondOrder::Single,
        };
        self.bonds.push(Bond { a, b, order, in_ring: false });
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), ChemError> {
        let start = self.pos;
        let digit: u16 = if self.bytes[self.pos] == b'%' {
            let d = self.text.get(self.pos + 1..self.pos + 3).unwrap_or("");
            if d.len() != 2 || !d.bytes().all(|b| b.is_ascii_digit()) {
                return Err(ChemError::UnexpectedCharacter { ch: '%', pos: start });
            }
            self.pos += 3;
            d.parse().expect("two ascii digits")
        } else {
            let d = u16::from(self.bytes[self.pos] - b'0');
            self.pos += 1;
            d
        };
        let Some(current) = self.prev else {
            return Err(ChemError::InvalidBond { pos: start, reason: "ring bond without atom" });
        };
        let order = self.pending_bond.take().map(|(o, _)| o);
        match self.rings.remove(&digit) {
            Some(open) => {
                let order = match (open.order, order) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(ChemError::InvalidBond { pos: start, reason: "conflicting ring bond orders" })
                    }
                    (x, y) => x.or(y),
                };
                self.connect(open.atom, current, order, start)?;
            }
            None => {
                self.rings.insert(digit, PendingRing { atom: current, order });
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, ChemError> {
        let start = self.pos;
        let rest = &self.text[start..];
        let (symbol, len) = if rest.starts_with("Cl") || rest.starts_with("Br") {
            (&rest[..2], 2)
        } else {
            let ch = rest.chars().next().expect("non-empty");
            (&rest[..ch.len_utf8()], ch.len_utf8())
        };
        let (element, aromatic) = match symbol {
            "B" | "C" | "N" | "O" | "P" | "S" | "F" | "Cl" | "Br" | "I" => {
                (elements::by_symbol(symbol).expect("organic subset").number, false)
            }
            "b" | "c" | "n" | "o" | "p" | "s" => (elements::aromatic_symbol(symbol).expect("aromatic subset"), true),
            _ => {
                let ch = symbol.chars().next().expect("non-empty");
                if ch.is_ascii_alphabetic() || ch == '*' {
                    return Err(ChemError::UnknownAtomSymbol { symbol: symbol.to_string(), pos: start });
                }
                return Err(ChemError::UnexpectedCharacter { ch, pos: start });
            }
        };
        self.pos += len;
        Ok(Atom {
            element,
            aromatic,
            formal_charge: 0,
            explicit_h: None,
            isotope: None,
            ring_member: false,
            implicit_h: 0,
            bracket: false,
        })
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.text[start..self.pos].parse().unwrap_or(u32::MAX))
    }

    fn bracket_atom(&mut self) -> Result<Atom, ChemError> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.read_number().map(|n| n.min(u32::from(u16::MAX)) as u16);

        let sym_start = self.pos;
        let rest = &self.text[sym_start..];
        let mut element = None;
        let mut aromatic = false;
        for len in [2, 1] {
            let Some(cand) = rest.get(..len) else { continue };
            if let Some(n) = elements::aromatic_symbol(cand) {
                element = Some(n);
                aromatic = true;
            } else if let Some(e) = elements::by_symbol(cand) {
                element = Some(e.number);
            }
            if element.is_some() {
                self.pos += len;
                break;
            }
        }
        let Some(element) = element else {
            let sym: String = rest.chars().take_while(|c| c.is_ascii_alphabetic() || *c == '*').collect();
            let sym = if sym.is_empty() { rest.chars().take(1).collect() } else { sym };
            return Err(ChemError::UnknownAtomSymbol { symbol: sym, pos: sym_start });
        };

        // chirality: @, @@, @TH1, @SP2, ...
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }
        if self.peek().is_some_and(|c| c.is_ascii_uppercase())
            && matches!(self.text.get(self.pos..self.pos + 2), Some("TH" | "AL" | "SP" | "TB" | "OH"))
        {
            self.pos += 2;
            self.read_number();
        }

        let mut explicit_h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            explicit_h = self.read_number().map_or(1, |n| n.min(255) as u8);
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                charge = unit * n.min(15) as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            self.read_number();
        }
        if self.peek() != Some(b']') {
            return match self.peek() {
                Some(c) => Err(ChemError::UnexpectedCharacter { ch: c as char, pos: self.pos }),
                None => Err(ChemError::UnexpectedCharacter { ch: '[', pos: open }),
            };
        }
        self.pos += 1;
        Ok(Atom {
            element,
            aromatic,
            formal_charge: charge.clamp(-15, 15) as i8,
            explicit_h: Some(explicit_h),
            isotope,
            ring_member: false,
            implicit_h: 0,
            bracket: true,
        })
    }
}

/// Default-valence hydrogen fill for organic-subset atoms.
fn fill_implicit_h(atoms: &mut [Atom], bonds: &[Bond]) {
    let mut used = vec![0u8; atoms.len()];
    for b in bonds {
        used[b.a] += b.order.valence();
        used[b.b] += b.order.valence();
    }
    for (atom, &sum) in atoms.iter_mut().zip(&used) {
        if atom.bracket {
            continue;
        }
        let valences = elements::by_number(atom.element).map_or(&[][..], |e| e.valences);
        atom.implicit_h = if atom.aromatic {
            valences.first().map_or(0, |&v| v.saturating_sub(sum + 1))
        } else {
            valences.iter().find(|&&v| v >= sum).map_or(0, |&v| v - sum)
        };
    }
}

/// Writes a SMILES string for `mol` using a randomized depth-first traversal.
///
/// Different RNG states give different spellings of the same graph. Every
/// spelling re-parses to an isomorphic graph with identical hydrogen counts.
pub fn write_smiles_random<R: Rng + ?Sized>(mol: &Molecule, rng: &mut R) -> String {
    let n = mol.atom_count();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut fragments = Vec::new();
    for &root in &order {
        if visited[root] {
            continue;
        }
        // First pass: spanning tree with randomized child order.
        let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut closures: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut tree_bond = vec![false; mol.bonds.len()];
        let mut seen_bond = vec![false; mol.bonds.len()];
        visited[root] = true;
        let mut dfs_order = Vec::new();
        dfs(mol, root, rng, &mut visited, &mut children, &mut tree_bond, &mut dfs_order);
        for &atom in &dfs_order {
            for &(_, b) in mol.neighbors(atom) {
                if !tree_bond[b] && !seen_bond[b] {
                    seen_bond[b] = true;
                    let bond = &mol.bonds[b];
                    closures[bond.a].push(b);
                    closures[bond.b].push(b);
                }
            }
        }
        let mut out = String::new();
        let mut digits: BTreeMap<usize, u16> = BTreeMap::new();
        let mut free: Vec<u16> = (1..100).rev().collect();
        emit(mol, root, None, &children, &closures, &mut digits, &mut free, &mut out);
        fragments.push(out);
    }
    fragments.join(".")
}

fn dfs<R: Rng + ?Sized>(
    mol: &Molecule,
    atom: usize,
    rng: &mut R,
    visited: &mut [bool],
    children: &mut [Vec<(usize, usize)>],
    tree_bond: &mut [bool],
    order: &mut Vec<usize>,
) {
    order.push(atom);
    let mut nbrs: Vec<(usize, usize)> = mol.neighbors(atom).to_vec();
    nbrs.shuffle(rng);
    for (next, b) in nbrs {
        if !visited[next] {
            visited[next] = true;
            tree_bond[b] = true;
            children[atom].push((next, b));
            dfs(mol, next, rng, visited, children, tree_bond, order);
        }
    }
}

fn bond_symbol(mol: &Molecule, bond: &Bond) -> &'static str {
    let both_aromatic = mol.atoms[bond.a].aromatic && mol.atoms[bond.b].aromatic;
    match bond.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

#[allow(clippy::too_many_arguments)]
fn emit(
    mol: &Molecule,
    atom: usize,
    via: Option<usize>,
    children: &[Vec<(usize, usize)>],
    closures: &[Vec<usize>],
    digits: &mut BTreeMap<usize, u16>,
    free: &mut Vec<u16>,
    out: &mut String,
) {
    if let Some(b) = via {
        out.push_str(bond_symbol(mol, &mol.bonds[b]));
    }
    write_atom(mol, atom, out);
    for &b in &closures[atom] {
        let (d, symbol) = match digits.remove(&b) {
            Some(d) => {
                free.push(d);
                (d, "")
            }
            None => {
                let d = free.pop().expect("fewer than 99 open rings");
                digits.insert(b, d);
                (d, bond_symbol(mol, &mol.bonds[b]))
            }
        };
        out.push_str(symbol);
        if d < 10 {
            let _ = write!(out, "{d}");
        } else {
            let _ = write!(out, "%{d:02}");
        }
    }
    let kids = &children[atom];
    for (i, &(child, b)) in kids.iter().enumerate() {
        let last = i + 1 == kids.len();
        if !last {
            out.push('(');
        }
        emit(mol, child, Some(b), children, closures, digits, free, out);
        if !last {
            out.push(')');
        }
    }
}

fn write_atom(mol: &Molecule, idx: usize, out: &mut String) {
    let atom = &mol.atoms[idx];
    let sym = elements::symbol(atom.element);
    if !atom.bracket && elements::is_organic_subset(atom.element) {
        if atom.aromatic {
            out.push_str(&sym.to_ascii_lowercase());
        } else {
            out.push_str(sym);
        }
        return;
    }
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    if atom.aromatic {
        out.push_str(&sym.to_ascii_lowercase());
    } else {
        out.push_str(sym);
    }
    let h = atom.explicit_h.unwrap_or(0) + atom.implicit_h;
    if h == 1 {
        out.push('H');
    } else if h > 1 {
        let _ = write!(out, "H{h}");
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    out.push(']');
    debug_assert!(atom.element != HYDROGEN || atom.bracket);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ethanol_chain() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(m.atom_count(), 3);
        assert_eq!(m.bonds.len(), 2);
        assert_eq!(m.fragment_count, 1);
        assert_eq!(m.atoms.iter().map(|a| a.implicit_h).collect::<Vec<_>>(), vec![3, 2, 1]);
    }

    #[test]
    fn benzene_graph() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert_eq!(m.bonds.len(), 6);
        assert!(m.atoms.iter().all(|a| a.aromatic && a.ring_member && a.implicit_h == 1));
        assert!(m.bonds.iter().all(|b| b.order == BondOrder::Aromatic && b.in_ring));
    }

    #[test]
    fn dangling_ring_digit() {
        assert_eq!(parse_smiles("C1CC"), Err(ChemError::UnclosedRing(1)));
    }

    #[test]
    fn error_paths() {
        assert_eq!(parse_smiles(""), Err(ChemError::EmptyInput));
        assert_eq!(parse_smiles("   "), Err(ChemError::EmptyInput));
        assert!(matches!(parse_smiles("CC(C"), Err(ChemError::UnbalancedParenthesis(_))));
        assert!(matches!(parse_smiles("CC)C"), Err(ChemError::UnbalancedParenthesis(_))));
        assert!(matches!(parse_smiles("CXC"), Err(ChemError::UnknownAtomSymbol { .. })));
        assert!(matches!(parse_smiles("C[Xx]"), Err(ChemError::UnknownAtomSymbol { .. })));
        assert!(matches!(parse_smiles("C11"), Err(ChemError::InvalidBond { .. })));
        assert!(matches!(parse_smiles("C1CC:1"), Err(ChemError::InvalidBond { .. })));
        assert!(matches!(parse_smiles("CC="), Err(ChemError::InvalidBond { .. })));
    }

    #[test]
    fn bracket_atoms() {
        let m = parse_smiles("[13CH3][NH3+]").unwrap();
        assert_eq!(m.atoms[0].isotope, Some(13));
        assert_eq!(m.atoms[0].explicit_h, Some(3));
        assert_eq!(m.atoms[1].formal_charge, 1);
        let m = parse_smiles("[O--]").unwrap();
        assert_eq!(m.atoms[0].formal_charge, -2);
        let m = parse_smiles("[Fe+3]").unwrap();
        assert_eq!(m.atoms[0].formal_charge, 3);
        let m = parse_smiles("C[C@@H](N)C(=O)O").unwrap();
        assert_eq!(m.atoms[1].explicit_h, Some(1));
        assert_eq!(m.heavy_atom_count(), 6);
    }

    #[test]
    fn stereo_bonds_and_percent_rings() {
        let m = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(m.bonds.len(), 3);
        let m = parse_smiles("C%12CCC%12").unwrap();
        assert_eq!(m.bonds.len(), 4);
        assert!(m.atoms.iter().all(|a| a.ring_member));
    }

    #[test]
    fn fragments() {
        let m = parse_smiles("CCO.[Na+].[Cl-]").unwrap();
        assert_eq!(m.fragment_count, 3);
        // ring bond spanning a dot joins the fragments
        let m = parse_smiles("C1.C1").unwrap();
        assert_eq!(m.fragment_count, 1);
    }

    #[test]
    fn biaryl_link_is_single() {
        let m = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        let link: Vec<_> = m.bonds.iter().filter(|b| !b.in_ring).collect();
        assert_eq!(link.len(), 1);
        assert_eq!(link[0].order, BondOrder::Single);
    }

    #[test]
    fn aromatic_hydrogens() {
        let m = parse_smiles("c1ccncc1").unwrap();
        assert_eq!(m.atoms[3].implicit_h, 0);
        let m = parse_smiles("c1ccsc1").unwrap();
        assert_eq!(m.atoms[3].implicit_h, 0);
        let m = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(m.total_h(3), 1);
        assert!(m.is_valid());
    }

    #[test]
    fn valence_examples() {
        assert!(parse_smiles("C").unwrap().is_valid());
        assert_eq!(parse_smiles("O(C)(C)C").unwrap().validate_valence(), Err(ChemError::ValenceViolation(0)));
        assert!(parse_smiles("[NH4+]").unwrap().is_valid());
        assert!(parse_smiles("C[N+](=O)[O-]").unwrap().is_valid());
        assert!(!parse_smiles("CN(=O)=O").unwrap().is_valid());
        assert!(parse_smiles("CS(=O)(=O)C").unwrap().is_valid());
        assert!(!parse_smiles("C(C)(C)(C)(C)C").unwrap().is_valid());
        assert!(parse_smiles("Cn1cccc1").unwrap().is_valid());
    }

    #[test]
    fn random_spellings_reparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for smi in ["CC(=O)Oc1ccccc1C(=O)O", "c1ccc2ccccc2c1", "C[N+](=O)[O-].[Na+]", "C1CC2CCC1CC2"] {
            let m = parse_smiles(smi).unwrap();
            for _ in 0..20 {
                let s = write_smiles_random(&m, &mut rng);
                let r = parse_smiles(&s).unwrap_or_else(|e| panic!("{s}: {e}"));
                assert_eq!(r.atom_count(), m.atom_count(), "{s}");
                assert_eq!(r.bonds.len(), m.bonds.len(), "{s}");
                let mut h1: Vec<u8> = (0..m.atom_count()).map(|i| m.total_h(i)).collect();
                let mut h2: Vec<u8> = (0..r.atom_count()).map(|i| r.total_h(i)).collect();
                h1.sort();
                h2.sort();
                assert_eq!(h1, h2, "{s}");
            }
        }
    }
}
