//! Molecular graphs parsed from SMILES and the physicochemical descriptors
//! used by the screening filter cascade.

pub mod crippen;
pub mod descriptors;
pub mod elements;
pub mod library;
pub mod smiles;

pub use descriptors::{
    aromatic_proportion, esol_logs, hba_count, hbd_count, molecular_weight, ring_count, rotatable_bond_count,
    Descriptors,
};
pub use library::{read_library, write_library, LibraryRecord};
pub use smiles::{parse_smiles, write_smiles_random};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("empty SMILES input")]
    EmptyInput,
    #[error("unbalanced parenthesis at position {0}")]
    UnbalancedParenthesis(usize),
    #[error("ring bond {0} opened but never closed")]
    UnclosedRing(u16),
    #[error("unknown atom symbol '{symbol}' at position {pos}")]
    UnknownAtomSymbol { symbol: String, pos: usize },
    #[error("unexpected character '{ch}' at position {pos}")]
    UnexpectedCharacter { ch: char, pos: usize },
    #[error("invalid bond at position {pos}: {reason}")]
    InvalidBond { pos: usize, reason: &'static str },
    #[error("valence violation at atom {0}")]
    ValenceViolation(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum. Aromatic bonds count as 1; the extra
    /// pi electron is accounted for per atom.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Stable code used in fingerprint hashing.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// Atomic number.
    pub element: u8,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside a bracket atom.
    pub explicit_h: Option<u8>,
    pub isotope: Option<u16>,
    pub ring_member: bool,
    /// Hydrogens filled in from the default valence (organic subset only).
    pub implicit_h: u8,
    pub bracket: bool,
}

impl Atom {
    pub fn is_hydrogen(&self) -> bool {
        self.element == elements::HYDROGEN
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub fragment_count: usize,
    pub source_smiles: String,
    /// Per atom: (neighbor index, bond index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    pub(crate) fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>, source_smiles: String) -> Molecule {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, bond) in bonds.iter().enumerate() {
            adjacency[bond.a].push((bond.b, i));
            adjacency[bond.b].push((bond.a, i));
        }
        let mut mol = Molecule { atoms, bonds, fragment_count: 0, source_smiles, adjacency };
        mol.fragment_count = mol.count_fragments();
        mol.perceive_rings();
        mol
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| !a.is_hydrogen()).count()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    /// Number of non-hydrogen neighbors.
    pub fn heavy_degree(&self, atom: usize) -> usize {
        self.adjacency[atom].iter().filter(|&&(n, _)| !self.atoms[n].is_hydrogen()).count()
    }

    /// Implicit + bracket hydrogens + hydrogen atoms present as graph nodes.
    pub fn total_h(&self, atom: usize) -> u8 {
        let a = &self.atoms[atom];
        let graph_h = self.adjacency[atom].iter().filter(|&&(n, _)| self.atoms[n].is_hydrogen()).count() as u8;
        a.implicit_h + a.explicit_h.unwrap_or(0) + graph_h
    }

    /// Sum of bond valence contributions (aromatic bonds count 1).
    pub fn bond_valence(&self, atom: usize) -> u8 {
        self.adjacency[atom].iter().map(|&(_, b)| self.bonds[b].order.valence()).sum()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a].iter().find(|&&(n, _)| n == b).map(|&(_, i)| &self.bonds[i])
    }

    /// Checks every atom against its charge-adjusted valence set.
    ///
    /// Aliphatic atoms pass when bonds + hydrogens do not exceed the largest
    /// allowed valence. Aromatic atoms may leave one unit for the pi system.
    /// Elements without a valence table (metals) are not checked.
    pub fn validate_valence(&self) -> Result<(), ChemError> {
        for (i, atom) in self.atoms.iter().enumerate() {
            let allowed = elements::charged_valences(atom.element, atom.formal_charge);
            if elements::by_number(atom.element).is_none_or(|e| e.valences.is_empty()) {
                continue;
            }
            let used = self.bond_valence(i) + atom.implicit_h + atom.explicit_h.unwrap_or(0);
            let ok = if atom.aromatic {
                allowed.iter().any(|&v| used <= v && v <= used + 1)
            } else {
                allowed.iter().any(|&v| used <= v)
            };
            if !ok {
                return Err(ChemError::ValenceViolation(i));
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate_valence().is_ok()
    }

    fn count_fragments(&self) -> usize {
        let n = self.atoms.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for bond in &self.bonds {
            let (ra, rb) = (find(&mut parent, bond.a), find(&mut parent, bond.b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Marks ring bonds (non-bridges) and ring atoms, then demotes aromatic
    /// bonds that ended up outside any ring to single bonds.
    fn perceive_rings(&mut self) {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative DFS: (atom, parent bond, next neighbor slot)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(frame) = stack.last_mut() {
                let (v, pbond, slot) = *frame;
                if slot < self.adjacency[v].len() {
                    frame.2 += 1;
                    let (w, b) = self.adjacency[v][slot];
                    if b == pbond {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, b, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(u, _, _)) = stack.last() {
                        low[u] = low[u].min(low[v]);
                        if low[v] > disc[u] {
                            is_bridge[pbond] = true;
                        }
                    }
                }
            }
        }
        for atom in &mut self.atoms {
            atom.ring_member = false;
        }
        for (i, bond) in self.bonds.iter_mut().enumerate() {
            bond.in_ring = !is_bridge[i];
            if bond.in_ring {
                self.atoms[bond.a].ring_member = true;
                self.atoms[bond.b].ring_member = true;
            } else if bond.order == BondOrder::Aromatic {
                bond.order = BondOrder::Single;
            }
        }
    }
}
