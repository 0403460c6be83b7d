mod common;

use aurascreen::chem::{parse_smiles, Descriptors};
use aurascreen::screening::{property_filter, FilterThresholds, Rule};
use common::PANEL;

#[test]
fn panel_matches_reference_values() {
    for (name, smiles, mw, hbd, hba, rb, rings, clogp, esol) in PANEL {
        let d = Descriptors::compute(&parse_smiles(smiles).unwrap());
        assert!((d.molecular_weight - mw).abs() <= 0.02, "{name}: mw {} vs {mw}", d.molecular_weight);
        assert_eq!((d.hbd, d.hba, d.rotatable_bonds, d.rings), (hbd, hba, rb, rings), "{name}");
        assert!((d.clogp - clogp).abs() <= 0.3, "{name}: clogp {} vs {clogp}", d.clogp);
        assert!((d.esol_logs - esol).abs() <= 0.3, "{name}: esol {} vs {esol}", d.esol_logs);
        assert_eq!(d.clogp_untyped_atoms, 0, "{name}");
    }
}

#[test]
fn aspirin_is_too_light() {
    let mol = parse_smiles(PANEL[0].1).unwrap();
    let d = Descriptors::compute(&mol);
    let reasons = property_filter(&mol, &d, &FilterThresholds::default());
    assert_eq!(reasons.len(), 1);
    assert_eq!(reasons[0].rule, Rule::MolecularWeight);
}
