//! Wildman-Crippen atom-contribution cLogP.
//!
//! Every heavy atom and every attached hydrogen is assigned exactly one atom
//! type; the first rule that matches wins, in table order. Contributions are
//! read from `data/crippen_v1.tsv`. Atoms no rule covers contribute 0.0 and
//! are reported back in [`Clogp::untyped_atoms`].

use std::collections::HashMap;
use std::sync::OnceLock;

use super::elements::{BROMINE, CARBON, CHLORINE, FLUORINE, HYDROGEN, IODINE, NITROGEN, OXYGEN, PHOSPHORUS, SULFUR};
use super::{BondOrder, Molecule};

pub const TABLE_VERSION: &str = "crippen_v1";
const TABLE_SOURCE: &str = include_str!("../../data/crippen_v1.tsv");

fn table() -> &'static HashMap<&'static str, f64> {
    static TABLE: OnceLock<HashMap<&'static str, f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        TABLE_SOURCE
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| {
                let mut cols = l.split('\t');
                let key = cols.next().expect("type column");
                let value =
                    cols.next().and_then(|v| v.parse().ok()).unwrap_or_else(|| panic!("bad contribution in row {l:?}"));
                (key, value)
            })
            .collect()
    })
}

/// Contribution of a named atom type from the shipped table.
pub fn contribution(atom_type: &str) -> Option<f64> {
    table().get(atom_type).copied()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clogp {
    pub value: f64,
    /// Heavy atoms without a matching type (contribution 0.0).
    pub untyped_atoms: Vec<usize>,
}

impl Clogp {
    pub fn is_flagged(&self) -> bool {
        !self.untyped_atoms.is_empty()
    }
}

/// Per-atom typing: heavy-atom type plus the type shared by its hydrogens.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomTyping {
    pub heavy: Option<&'static str>,
    pub hydrogen: Option<&'static str>,
    pub h_count: u8,
}

pub fn clogp(mol: &Molecule) -> Clogp {
    let mut terms = Vec::new();
    let mut untyped_atoms = Vec::new();
    for (i, t) in type_atoms(mol).into_iter().enumerate() {
        if mol.atoms[i].is_hydrogen() {
            continue;
        }
        match t.heavy.and_then(contribution) {
            Some(c) => terms.push(c),
            None => untyped_atoms.push(i),
        }
        if let Some(h) = t.hydrogen.and_then(contribution) {
            terms.push(h * f64::from(t.h_count));
        }
    }
    Clogp { value: ordered_sum(terms), untyped_atoms }
}

/// Sum in sorted order so the result does not depend on atom order.
pub(crate) fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

pub fn type_atoms(mol: &Molecule) -> Vec<AtomTyping> {
    (0..mol.atom_count())
        .map(|i| {
            if mol.atoms[i].is_hydrogen() {
                return AtomTyping { heavy: None, hydrogen: None, h_count: 0 };
            }
            let env = Env::new(mol, i);
            let h_count = mol.total_h(i);
            AtomTyping { heavy: env.heavy_type(), hydrogen: (h_count > 0).then(|| env.hydrogen_type()), h_count }
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Nbr {
    idx: usize,
    el: u8,
    arom: bool,
    order: BondOrder,
}

impl Nbr {
    /// SMARTS default bond: single or aromatic.
    fn default_bond(&self) -> bool {
        matches!(self.order, BondOrder::Single | BondOrder::Aromatic)
    }
    fn aliphatic_heavy(&self) -> bool {
        !self.arom
    }
    fn aliphatic(&self, el: u8) -> bool {
        !self.arom && self.el == el
    }
}

struct Env<'a> {
    mol: &'a Molecule,
    el: u8,
    arom: bool,
    charge: i8,
    h: u8,
    /// total connections, hydrogens included
    x: usize,
    nbrs: Vec<Nbr>,
}

fn is_aliphatic_hetero(n: &Nbr) -> bool {
    !n.arom && matches!(n.el, NITROGEN | OXYGEN | PHOSPHORUS | SULFUR | FLUORINE | CHLORINE | BROMINE | IODINE)
}

impl<'a> Env<'a> {
    fn new(mol: &'a Molecule, i: usize) -> Env<'a> {
        let atom = &mol.atoms[i];
        let nbrs: Vec<Nbr> = mol
            .neighbors(i)
            .iter()
            .filter(|&&(n, _)| !mol.atoms[n].is_hydrogen())
            .map(|&(n, b)| Nbr {
                idx: n,
                el: mol.atoms[n].element,
                arom: mol.atoms[n].aromatic,
                order: mol.bonds[b].order,
            })
            .collect();
        let h = mol.total_h(i);
        Env {
            mol,
            el: atom.element,
            arom: atom.aromatic,
            charge: atom.formal_charge,
            h,
            x: nbrs.len() + usize::from(h),
            nbrs,
        }
    }

    fn default_nbrs(&self) -> impl Iterator<Item = &Nbr> {
        self.nbrs.iter().filter(|n| n.default_bond())
    }

    fn count_default(&self, pred: impl Fn(&Nbr) -> bool) -> usize {
        self.default_nbrs().filter(|n| pred(n)).count()
    }

    fn any_default(&self, pred: impl Fn(&Nbr) -> bool) -> bool {
        self.default_nbrs().any(pred)
    }

    fn any_order(&self, order: BondOrder, pred: impl Fn(&Nbr) -> bool) -> bool {
        self.nbrs.iter().any(|n| n.order == order && pred(n))
    }

    fn count_order(&self, order: BondOrder, pred: impl Fn(&Nbr) -> bool) -> usize {
        self.nbrs.iter().filter(|n| n.order == order && pred(n)).count()
    }

    fn heavy_type(&self) -> Option<&'static str> {
        match self.el {
            CARBON if self.arom => Some(self.aromatic_carbon()),
            CARBON => Some(self.aliphatic_carbon()),
            NITROGEN => Some(self.nitrogen()),
            OXYGEN => Some(self.oxygen()),
            FLUORINE | CHLORINE | BROMINE | IODINE if self.charge < 0 => Some("Hal"),
            IODINE if self.charge > 0 => Some("Hal"),
            FLUORINE | CHLORINE | BROMINE if self.charge > 0 => None,
            FLUORINE => Some("F"),
            CHLORINE => Some("Cl"),
            BROMINE => Some("Br"),
            IODINE => Some("I"),
            PHOSPHORUS => Some("P"),
            SULFUR => Some(self.sulfur()),
            3 | 11 | 19 | 37 | 55 if self.charge > 0 => Some("Hal"),
            3 | 11 | 19 | 37 | 55 | 4 | 12 | 20 | 38 | 56 | 5 | 13 | 31 | 49 | 81 | 14 | 32 | 50 | 82 | 33 | 51
            | 83 | 34 | 52 | 84 => Some("Me1"),
            21..=30 | 39..=48 | 72..=80 => Some("Me2"),
            _ => None,
        }
    }

    fn aliphatic_carbon(&self) -> &'static str {
        let h = self.h;
        let x4 = self.x == 4;
        let aliph_c = |n: &Nbr| n.aliphatic(CARBON);
        let n_aliph_c = self.count_default(aliph_c);
        let n_aliph_heavy = self.count_default(Nbr::aliphatic_heavy);
        let has_hetero = self.any_default(is_aliphatic_hetero);

        if h == 4 || (h == 3 && n_aliph_c >= 1) || (h == 2 && n_aliph_c >= 2) {
            return "C1";
        }
        if (h == 1 && n_aliph_c >= 3) || (h == 0 && n_aliph_c >= 4) {
            return "C2";
        }
        if (h == 3 && has_hetero) || (h == 2 && x4 && has_hetero && n_aliph_heavy >= 2) {
            return "C3";
        }
        if x4 && has_hetero && ((h == 1 && n_aliph_heavy >= 3) || (h == 0 && n_aliph_heavy >= 4)) {
            return "C4";
        }
        if self.any_order(BondOrder::Double, |n| !n.arom && n.el != CARBON) {
            return "C5";
        }
        let dbl_aliph_c = self.any_order(BondOrder::Double, aliph_c);
        if dbl_aliph_c
            && (h == 2
                || (h == 1 && n_aliph_heavy >= 1)
                || (h == 0 && n_aliph_heavy >= 2)
                || self.count_order(BondOrder::Double, aliph_c) >= 2)
        {
            return "C6";
        }
        if self.x == 2 && self.any_order(BondOrder::Triple, Nbr::aliphatic_heavy) {
            return "C7";
        }
        let arom_c = |n: &Nbr| n.arom && n.el == CARBON;
        let has_arom = self.any_default(|n| n.arom);
        if h == 3 && self.any_default(arom_c) {
            return "C8";
        }
        if h == 3 && has_arom {
            return "C9";
        }
        if x4 && has_arom {
            match h {
                2 => return "C10",
                1 => return "C11",
                0 => return "C12",
                _ => {}
            }
        }
        if dbl_aliph_c {
            let n_arom = self.count_default(|n| n.arom);
            if (n_arom >= 1 && n_aliph_heavy >= 1)
                || (self.any_default(arom_c) && n_arom >= 2)
                || (h == 1 && n_arom >= 1)
            {
                return "C26";
            }
        }
        if self.any_order(BondOrder::Double, arom_c) {
            return "C26";
        }
        if x4
            && self.any_default(|n| {
                !n.arom
                    && !matches!(
                        n.el,
                        CARBON
                            | NITROGEN
                            | OXYGEN
                            | PHOSPHORUS
                            | SULFUR
                            | FLUORINE
                            | CHLORINE
                            | BROMINE
                            | IODINE
                            | HYDROGEN
                    )
            })
        {
            return "C27";
        }
        "CS"
    }

    fn aromatic_carbon(&self) -> &'static str {
        if self.h == 0
            && self.any_order(BondOrder::Single, |n| {
                !n.arom
                    && !matches!(
                        n.el,
                        CARBON | NITROGEN | OXYGEN | SULFUR | FLUORINE | CHLORINE | BROMINE | IODINE | HYDROGEN
                    )
            })
        {
            return "C13";
        }
        for (el, t) in [(FLUORINE, "C14"), (CHLORINE, "C15"), (BROMINE, "C16"), (IODINE, "C17")] {
            if self.any_default(|n| n.el == el) {
                return t;
            }
        }
        if self.h == 1 {
            return "C18";
        }
        let n_arom_bonds = self.count_order(BondOrder::Aromatic, |n| n.arom);
        if n_arom_bonds >= 3 {
            return "C19";
        }
        if n_arom_bonds >= 2 {
            if self.any_order(BondOrder::Single, |n| n.arom) {
                return "C20";
            }
            for (el, t) in [(CARBON, "C21"), (NITROGEN, "C22"), (OXYGEN, "C23"), (SULFUR, "C24")] {
                if self.any_order(BondOrder::Single, |n| n.aliphatic(el)) {
                    return t;
                }
            }
            if self.any_order(BondOrder::Double, |n| !n.arom && matches!(n.el, CARBON | NITROGEN | OXYGEN)) {
                return "C25";
            }
        }
        "CS"
    }

    fn nitrogen(&self) -> &'static str {
        let h = self.h;
        let q = self.charge;
        if self.arom {
            return match q {
                0 => "N11",
                c if c > 0 => "N12",
                _ => "NS",
            };
        }
        let n_aliph = self.count_default(Nbr::aliphatic_heavy);
        let n_arom = self.count_default(|n| n.arom);
        let n_heavy = self.default_nbrs().count();
        if q == 0 {
            if h == 2 && n_aliph >= 1 {
                return "N1";
            }
            if h == 1 && n_aliph >= 2 {
                return "N2";
            }
            if h == 2 && n_arom >= 1 {
                return "N3";
            }
            if h == 1 && n_arom >= 1 && n_heavy >= 2 {
                return "N4";
            }
            let has_double = self.any_order(BondOrder::Double, |_| true);
            if h == 1 && has_double {
                return "N5";
            }
            if has_double && n_heavy >= 1 {
                return "N6";
            }
            if n_aliph >= 3 {
                return "N7";
            }
            if n_arom >= 1 && n_heavy >= 3 && (n_aliph >= 1 || n_arom >= 3) {
                return "N8";
            }
            if self.any_order(BondOrder::Triple, Nbr::aliphatic_heavy) {
                return "N9";
            }
        }
        if q > 0 {
            if (1..=3).contains(&h) {
                return "N10";
            }
            if h == 0 {
                let dbl_aliph = self.count_order(BondOrder::Double, Nbr::aliphatic_heavy);
                if n_aliph >= 4
                    || (dbl_aliph >= 1 && n_aliph >= 1 && n_heavy >= 2)
                    || (self.any_order(BondOrder::Double, |n| n.el == CARBON)
                        && self.any_order(BondOrder::Double, |n| n.el == NITROGEN))
                {
                    return "N13";
                }
            }
            if self.any_order(BondOrder::Triple, Nbr::aliphatic_heavy) {
                return "N14";
            }
            if self.any_order(BondOrder::Double, |n| {
                n.el == NITROGEN && !n.arom && self.mol.atoms[n.idx].formal_charge < 0
            }) {
                return "N14";
            }
        }
        if q < 0 {
            return "N14";
        }
        "NS"
    }

    fn oxygen(&self) -> &'static str {
        if self.arom {
            return "O1";
        }
        let h = self.h;
        let q = self.charge;
        if h == 1 || h == 2 {
            return "O2";
        }
        if self.count_default(Nbr::aliphatic_heavy) >= 2 {
            return "O3";
        }
        if self.any_default(|n| n.arom) && self.default_nbrs().count() >= 2 {
            return "O4";
        }
        if self.any_order(BondOrder::Double, |n| matches!(n.el, NITROGEN | OXYGEN)) {
            return "O5";
        }
        if self.x == 1 && q < 0 && self.any_default(|n| n.el == NITROGEN) {
            return "O5";
        }
        if self.x == 1 && q < 0 && self.any_default(|n| n.el == SULFUR) {
            return "O6";
        }
        if q == 0 && self.any_order(BondOrder::Double, |n| n.el == SULFUR && self.mol.atoms[n.idx].formal_charge == 0) {
            return "O6";
        }
        if q == -1 && self.any_default(|n| n.aliphatic(CARBON) && self.carbon_has_double_o(n.idx)) {
            return "O12";
        }
        if self.x == 1 && q < 0 && self.any_default(|n| !(n.el == NITROGEN && !n.arom) && !(n.el == SULFUR && !n.arom))
        {
            return "O7";
        }
        if self.any_order(BondOrder::Double, |n| n.arom && n.el == CARBON) {
            return "O8";
        }
        if let Some(c) = self.nbrs.iter().find(|n| n.order == BondOrder::Double && n.aliphatic(CARBON)) {
            return self.carbonyl_type(c.idx);
        }
        "OS"
    }

    fn carbon_has_double_o(&self, c: usize) -> bool {
        self.mol
            .neighbors(c)
            .iter()
            .any(|&(n, b)| self.mol.bonds[b].order == BondOrder::Double && self.mol.atoms[n].element == OXYGEN)
    }

    /// Types the oxygen of a C=O group from the carbonyl carbon's other
    /// substituents.
    fn carbonyl_type(&self, c: usize) -> &'static str {
        let cenv = Env::new(self.mol, c);
        let others: Vec<Nbr> = cenv.default_nbrs().copied().collect();
        let aliph_c = others.iter().filter(|n| n.aliphatic(CARBON)).count();
        let aliph_heavy = others.iter().filter(|n| !n.arom).count();
        let arom = others.iter().filter(|n| n.arom).count();
        let arom_c = others.iter().filter(|n| n.arom && n.el == CARBON).count();
        let any_c = others.iter().filter(|n| n.el == CARBON).count();
        let non_c = others.iter().filter(|n| n.el != CARBON).count();
        let h = cenv.h;

        // O9
        if (h == 1 && aliph_c >= 1)
            || (aliph_c >= 1 && aliph_heavy >= 2)
            || (h == 1 && others.iter().any(|n| !n.arom && matches!(n.el, NITROGEN | OXYGEN)))
            || h == 2
            || (cenv.x == 2 && cenv.count_order(BondOrder::Double, |n| n.el == OXYGEN) >= 2)
        {
            return "O9";
        }
        // O10
        if (h == 1 && arom_c >= 1)
            || (any_c >= 1 && arom >= 1 && others.len() >= 2)
            || (arom_c >= 1 && aliph_heavy >= 1)
        {
            return "O10";
        }
        if non_c >= 2 {
            return "O11";
        }
        "OS"
    }

    fn sulfur(&self) -> &'static str {
        if !self.arom {
            if self.charge != 0 {
                return "S2";
            }
            if self.any_order(BondOrder::Double, |n| !n.arom && matches!(n.el, NITROGEN | OXYGEN | PHOSPHORUS | SULFUR))
            {
                return "S2";
            }
            return "S1";
        }
        "S3"
    }

    fn hydrogen_type(&self) -> &'static str {
        match self.el {
            CARBON | HYDROGEN => "H1",
            NITROGEN => "H3",
            OXYGEN => {
                if self.h >= 2
                    || self.any_default(|n| {
                        (n.aliphatic(CARBON) && Env::new(self.mol, n.idx).x == 4) || (n.arom && n.el == CARBON)
                    })
                    || self.any_default(|n| n.arom || !matches!(n.el, CARBON | NITROGEN | OXYGEN | SULFUR))
                {
                    return "H2";
                }
                if self.any_default(|n| n.el == NITROGEN) {
                    return "H3";
                }
                if self.any_default(|n| {
                    n.aliphatic(CARBON)
                        && self.mol.neighbors(n.idx).iter().any(|&(m, b)| {
                            let a = &self.mol.atoms[m];
                            self.mol.bonds[b].order == BondOrder::Double
                                && (matches!(a.element, CARBON | NITROGEN)
                                    || (!a.aromatic && matches!(a.element, OXYGEN | SULFUR)))
                        })
                }) || self.any_default(|n| !n.arom && matches!(n.el, OXYGEN | SULFUR))
                {
                    return "H4";
                }
                "HS"
            }
            _ => "H2",
        }
    }
}
