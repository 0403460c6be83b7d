//! Shared fixtures. MW, cLogP and ESOL references come from an external
//! toolkit run; counts follow the donor/acceptor/rotor rules directly.

#![allow(dead_code)]

/// name, smiles, mw, hbd, hba, rotatable, rings, clogp, esol
pub type PanelRow = (&'static str, &'static str, f64, usize, usize, usize, usize, f64, f64);

pub const PANEL: [PanelRow; 20] = [
    ("aspirin", "CC(=O)Oc1ccccc1C(=O)O", 180.1590, 1, 4, 3, 1, 1.3101, -1.9259),
    ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", 206.2850, 1, 2, 4, 1, 3.0732, -3.0871),
    ("caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C", 194.1940, 0, 6, 0, 2, -1.0293, -0.8713),
    ("paracetamol", "CC(=O)Nc1ccc(O)cc1", 151.1650, 2, 3, 2, 1, 1.3506, -1.8997),
    ("ethanol", "CCO", 46.0690, 1, 1, 0, 0, -0.0014, -0.1247),
    ("benzene", "c1ccccc1", 78.1140, 0, 0, 0, 1, 1.6866, -2.1269),
    ("acetamide", "NC(=O)C", 59.0680, 1, 2, 0, 0, -0.5084, 0.1141),
    ("butane", "CCCC", 58.1240, 0, 0, 1, 0, 1.8064, -1.2724),
    ("naphthalene", "c1ccc2ccccc2c1", 128.1740, 0, 0, 0, 2, 2.8398, -3.1638),
    ("hexane", "CCCCCC", 86.1780, 0, 0, 3, 0, 2.5866, -1.8059),
    ("indole", "c1ccc2[nH]ccc2c1", 117.1510, 1, 1, 0, 2, 2.1679, -2.6721),
    ("pyridine", "c1ccncc1", 79.1020, 0, 1, 0, 1, 1.0816, -1.7518),
    ("triethylamine", "CCN(CC)CC", 101.1930, 0, 1, 3, 0, 1.3481, -1.1187),
    ("glycerol", "OCC(O)CO", 92.0940, 3, 3, 2, 0, -1.6681, 0.7719),
    ("morpholine", "C1COCCN1", 87.1220, 1, 2, 0, 1, -0.3938, -0.1321),
    ("cyclohexanone", "O=C1CCCCC1", 98.1450, 0, 1, 0, 1, 1.5196, -1.4058),
    ("biphenyl", "c1ccc(cc1)-c1ccccc1", 154.2120, 0, 0, 1, 2, 3.3536, -3.5829),
    ("diazepam", "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21", 284.7460, 0, 3, 1, 3, 3.1538, -3.9703),
    ("nicotine", "CN1CCCC1c1cccnc1", 162.2360, 0, 2, 1, 2, 1.8483, -2.3143),
    ("lidocaine", "CCN(CC)CC(=O)Nc1c(C)cccc1C", 234.3430, 1, 3, 6, 1, 2.5837, -2.7859),
];
