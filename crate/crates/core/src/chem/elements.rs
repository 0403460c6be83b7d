//! Element table: symbols, standard atomic weights and default valences.
//!
//! Weights are the IUPAC 2021 abridged standard atomic weights rounded to
//! three decimals.

#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub number: u8,
    pub symbol: &'static str,
    pub weight: f64,
    /// Allowed neutral valences, smallest first. Empty means unchecked.
    pub valences: &'static [u8],
}

pub const HYDROGEN: u8 = 1;
pub const BORON: u8 = 5;
pub const CARBON: u8 = 6;
pub const NITROGEN: u8 = 7;
pub const OXYGEN: u8 = 8;
pub const FLUORINE: u8 = 9;
pub const PHOSPHORUS: u8 = 15;
pub const SULFUR: u8 = 16;
pub const CHLORINE: u8 = 17;
pub const BROMINE: u8 = 35;
pub const IODINE: u8 = 53;

pub const H_WEIGHT: f64 = 1.008;

static TABLE: &[Element] = &[
    Element { number: 1, symbol: "H", weight: 1.008, valences: &[1] },
    Element { number: 3, symbol: "Li", weight: 6.94, valences: &[] },
    Element { number: 5, symbol: "B", weight: 10.81, valences: &[3] },
    Element { number: 6, symbol: "C", weight: 12.011, valences: &[4] },
    Element { number: 7, symbol: "N", weight: 14.007, valences: &[3] },
    Element { number: 8, symbol: "O", weight: 15.999, valences: &[2] },
    Element { number: 9, symbol: "F", weight: 18.998, valences: &[1] },
    Element { number: 11, symbol: "Na", weight: 22.990, valences: &[] },
    Element { number: 12, symbol: "Mg", weight: 24.305, valences: &[] },
    Element { number: 13, symbol: "Al", weight: 26.982, valences: &[] },
    Element { number: 14, symbol: "Si", weight: 28.085, valences: &[4] },
    Element { number: 15, symbol: "P", weight: 30.974, valences: &[3, 5] },
    Element { number: 16, symbol: "S", weight: 32.06, valences: &[2, 4, 6] },
    Element { number: 17, symbol: "Cl", weight: 35.45, valences: &[1] },
    Element { number: 19, symbol: "K", weight: 39.098, valences: &[] },
    Element { number: 20, symbol: "Ca", weight: 40.078, valences: &[] },
    Element { number: 26, symbol: "Fe", weight: 55.845, valences: &[] },
    Element { number: 29, symbol: "Cu", weight: 63.546, valences: &[] },
    Element { number: 30, symbol: "Zn", weight: 65.38, valences: &[] },
    Element { number: 33, symbol: "As", weight: 74.922, valences: &[3, 5] },
    Element { number: 34, symbol: "Se", weight: 78.971, valences: &[2, 4, 6] },
    Element { number: 35, symbol: "Br", weight: 79.904, valences: &[1] },
    Element { number: 53, symbol: "I", weight: 126.904, valences: &[1] },
];

pub fn by_number(number: u8) -> Option<&'static Element> {
    TABLE.iter().find(|e| e.number == number)
}

pub fn by_symbol(symbol: &str) -> Option<&'static Element> {
    TABLE.iter().find(|e| e.symbol == symbol)
}

/// Symbol of an element; `"?"` for numbers outside the table.
pub fn symbol(number: u8) -> &'static str {
    by_number(number).map_or("?", |e| e.symbol)
}

/// Allowed valences after adjusting for formal charge.
///
/// Group 15-17 atoms gain one bond per positive charge (N+ is isoelectronic
/// with C) and lose one per negative charge. Carbon and silicon lose one per
/// unit of charge either way; boron behaves inversely to nitrogen.
pub fn charged_valences(number: u8, charge: i8) -> Vec<u8> {
    let Some(el) = by_number(number) else {
        return Vec::new();
    };
    let c = i32::from(charge);
    el.valences
        .iter()
        .filter_map(|&v| {
            let v = i32::from(v);
            let adj = match number {
                HYDROGEN | CARBON | 14 => v - c.abs(),
                BORON => v - c,
                _ => v + c,
            };
            u8::try_from(adj).ok()
        })
        .collect()
}

/// Lowercase aromatic symbols accepted in SMILES input.
pub fn aromatic_symbol(symbol: &str) -> Option<u8> {
    match symbol {
        "b" => Some(BORON),
        "c" => Some(CARBON),
        "n" => Some(NITROGEN),
        "o" => Some(OXYGEN),
        "p" => Some(PHOSPHORUS),
        "s" => Some(SULFUR),
        "se" => Some(34),
        "as" => Some(33),
        _ => None,
    }
}

/// Elements writable outside brackets in SMILES.
pub fn is_organic_subset(number: u8) -> bool {
    matches!(number, BORON | CARBON | NITROGEN | OXYGEN | PHOSPHORUS | SULFUR | FLUORINE | CHLORINE | BROMINE | IODINE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_adjusts_valence() {
        assert_eq!(charged_valences(NITROGEN, 1), vec![4]);
        assert_eq!(charged_valences(OXYGEN, -1), vec![1]);
        assert_eq!(charged_valences(CARBON, -1), vec![3]);
        assert_eq!(charged_valences(BORON, -1), vec![4]);
        assert_eq!(charged_valences(FLUORINE, -1), vec![0]);
        assert!(charged_valences(11, 1).is_empty());
    }

    #[test]
    fn lookup_roundtrip() {
        for el in TABLE {
            assert_eq!(by_symbol(el.symbol).unwrap().number, el.number);
        }
        assert_eq!(symbol(200), "?");
    }
}
