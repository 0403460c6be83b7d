//! Physicochemical descriptors used by the property filter.

use serde::{Deserialize, Serialize};

use super::crippen;
use super::elements::{self, H_WEIGHT, NITROGEN, OXYGEN};
use super::{BondOrder, Molecule};

/// Molecular weight in Da, hydrogens included.
pub fn molecular_weight(mol: &Molecule) -> f64 {
    let terms = mol
        .atoms
        .iter()
        .map(|atom| {
            // graph H atoms are summed as atoms themselves
            let own = elements::by_number(atom.element).map_or(0.0, |e| e.weight);
            let h = atom.implicit_h + atom.explicit_h.unwrap_or(0);
            own + f64::from(h) * H_WEIGHT
        })
        .collect();
    crippen::ordered_sum(terms)
}

/// Lipinski donors: N or O atoms carrying at least one hydrogen.
pub fn hbd_count(mol: &Molecule) -> usize {
    (0..mol.atom_count()).filter(|&i| matches!(mol.atoms[i].element, NITROGEN | OXYGEN) && mol.total_h(i) > 0).count()
}

/// Lipinski acceptors: all N and O atoms.
pub fn hba_count(mol: &Molecule) -> usize {
    mol.atoms.iter().filter(|a| matches!(a.element, NITROGEN | OXYGEN)).count()
}

/// Non-ring single bonds whose endpoints both have heavy degree >= 2.
/// Amide C-N bonds are counted.
pub fn rotatable_bond_count(mol: &Molecule) -> usize {
    mol.bonds
        .iter()
        .filter(|b| {
            b.order == BondOrder::Single && !b.in_ring && mol.heavy_degree(b.a) >= 2 && mol.heavy_degree(b.b) >= 2
        })
        .count()
}

/// Cyclomatic number: bonds - atoms + fragments.
pub fn ring_count(mol: &Molecule) -> usize {
    (mol.bonds.len() + mol.fragment_count).saturating_sub(mol.atom_count())
}

/// Fraction of heavy atoms that are aromatic; 0 for an empty molecule.
pub fn aromatic_proportion(mol: &Molecule) -> f64 {
    let heavy = mol.heavy_atom_count();
    if heavy == 0 {
        return 0.0;
    }
    let aromatic = mol.atoms.iter().filter(|a| !a.is_hydrogen() && a.aromatic).count();
    aromatic as f64 / heavy as f64
}

/// Delaney ESOL log S from its four inputs.
pub fn esol_from_parts(clogp: f64, mw: f64, rotatable: usize, aromatic_prop: f64) -> f64 {
    0.16 - 0.63 * clogp - 0.0062 * mw + 0.066 * rotatable as f64 - 0.74 * aromatic_prop
}

pub fn esol_logs(mol: &Molecule) -> f64 {
    esol_from_parts(
        crippen::clogp(mol).value,
        molecular_weight(mol),
        rotatable_bond_count(mol),
        aromatic_proportion(mol),
    )
}

/// Every descriptor the filter cascade needs, computed in one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptors {
    pub molecular_weight: f64,
    pub clogp: f64,
    pub clogp_untyped_atoms: usize,
    pub hbd: usize,
    pub hba: usize,
    pub rotatable_bonds: usize,
    pub rings: usize,
    pub aromatic_proportion: f64,
    pub esol_logs: f64,
    pub heavy_atoms: usize,
    pub fragments: usize,
}

impl Descriptors {
    pub fn compute(mol: &Molecule) -> Descriptors {
        let logp = crippen::clogp(mol);
        let mw = molecular_weight(mol);
        let rb = rotatable_bond_count(mol);
        let ap = aromatic_proportion(mol);
        Descriptors {
            molecular_weight: mw,
            clogp: logp.value,
            clogp_untyped_atoms: logp.untyped_atoms.len(),
            hbd: hbd_count(mol),
            hba: hba_count(mol),
            rotatable_bonds: rb,
            rings: ring_count(mol),
            aromatic_proportion: ap,
            esol_logs: esol_from_parts(logp.value, mw, rb, ap),
            heavy_atoms: mol.heavy_atom_count(),
            fragments: mol.fragment_count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn mol(s: &str) -> Molecule {
        parse_smiles(s).unwrap()
    }

    #[test]
    fn weights() {
        assert!((molecular_weight(&mol("O")) - 18.015).abs() < 0.01);
        assert!((molecular_weight(&mol("CCO")) - 46.069).abs() < 0.01);
        assert!((molecular_weight(&mol("CC(=O)Oc1ccccc1C(=O)O")) - 180.16).abs() < 0.02);
        // explicit [H] atoms weigh the same as implicit ones
        assert!((molecular_weight(&mol("[H]O[H]")) - 18.015).abs() < 0.01);
    }

    #[test]
    fn donors_acceptors() {
        let m = mol("CCO");
        assert_eq!((hbd_count(&m), hba_count(&m)), (1, 1));
        let m = mol("c1ccccc1");
        assert_eq!((hbd_count(&m), hba_count(&m)), (0, 0));
        let m = mol("NC(=O)C");
        assert_eq!((hbd_count(&m), hba_count(&m)), (1, 2));
    }

    #[test]
    fn rotatable() {
        assert_eq!(rotatable_bond_count(&mol("CCO")), 0);
        assert_eq!(rotatable_bond_count(&mol("CCCC")), 1);
        assert_eq!(rotatable_bond_count(&mol("c1ccccc1")), 0);
    }

    #[test]
    fn rings() {
        assert_eq!(ring_count(&mol("CCO")), 0);
        assert_eq!(ring_count(&mol("c1ccccc1")), 1);
        assert_eq!(ring_count(&mol("c1ccc2ccccc2c1")), 2);
        assert_eq!(ring_count(&mol("c1ccccc1.C1CC1")), 2);
    }

    #[test]
    fn esol_intercept_and_benzene() {
        assert_eq!(esol_from_parts(0.0, 0.0, 0, 0.0), 0.16);
        let m = mol("c1ccccc1");
        let expected = 0.16 - 0.63 * crippen::clogp(&m).value - 0.0062 * molecular_weight(&m) - 0.74;
        assert!((esol_logs(&m) - expected).abs() < 1e-12);
    }

    #[test]
    fn ethanol_esol_plug_in() {
        // clogp(CCO) = C1 + C3 + O2 + 5 H1 + 1 H2 = -0.0014
        let m = mol("CCO");
        let expected = 0.16 - 0.63 * -0.0014 - 0.0062 * 46.069;
        assert!((esol_logs(&m) - expected).abs() < 1e-3);
    }
}
