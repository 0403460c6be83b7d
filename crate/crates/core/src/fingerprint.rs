//! Folded Morgan (ECFP) fingerprints, Tanimoto similarity and the binary
//! fingerprint cache.
//!
//! Hashing is FNV-1a 64 over a little-endian byte encoding:
//!
//! * radius 0: `[atomic number u8, heavy degree u8, total H u8, formal charge i8,
//!   ring member u8, aromatic u8]`
//! * radius r > 0: previous identifier as `u64` LE, followed by the neighbor
//!   list sorted ascending as `(bond code u8, neighbor identifier u64 LE)` pairs.
//!
//! Every identifier at every radius sets bit `hash mod width`. Hydrogens that
//! are graph nodes contribute only through the total H count of their
//! heavy neighbor.

use std::io::{Read, Write};

use thiserror::Error;

use crate::chem::Molecule;

pub const DEFAULT_WIDTH: usize = 1024;
pub const DEFAULT_RADIUS: usize = 2;
const CACHE_MAGIC: &[u8; 4] = b"AFP1";

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("width {0} is not a power of two >= 8")]
    InvalidWidth(usize),
    #[error("molecule fails valence validation")]
    InvalidMolecule,
    #[error("malformed fingerprint data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    radius: usize,
}

fn check_width(width: usize) -> Result<(), FingerprintError> {
    if width < 8 || !width.is_power_of_two() {
        return Err(FingerprintError::InvalidWidth(width));
    }
    Ok(())
}

impl Fingerprint {
    pub fn empty(width: usize, radius: usize) -> Result<Fingerprint, FingerprintError> {
        check_width(width)?;
        Ok(Fingerprint { words: vec![0; width.div_ceil(64)], width, radius })
    }

    /// Builds a fingerprint with the given bits set. Indices are folded modulo the width.
    pub fn from_bits(width: usize, bits: impl IntoIterator<Item = usize>) -> Result<Fingerprint, FingerprintError> {
        let mut fp = Fingerprint::empty(width, 0)?;
        for b in bits {
            fp.set(b % width);
        }
        Ok(fp)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.width && self.words[bit / 64] & (1 << (bit % 64)) != 0
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn on_bits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.get(b))
    }

    /// `self` has every bit that `other` has.
    pub fn contains(&self, other: &Fingerprint) -> bool {
        self.width == other.width && self.words.iter().zip(&other.words).all(|(a, b)| a & b == *b)
    }

    /// `width / 8` bytes; byte `i` holds bits `8i..8i+8`, least significant first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.width / 8);
        out
    }

    pub fn from_bytes(width: usize, bytes: &[u8]) -> Result<Fingerprint, FingerprintError> {
        check_width(width)?;
        if bytes.len() != width / 8 {
            return Err(FingerprintError::Malformed(format!(
                "expected {} bytes for width {width}, got {}",
                width / 8,
                bytes.len()
            )));
        }
        let mut fp = Fingerprint::empty(width, 0)?;
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            fp.words[i] = u64::from_le_bytes(buf);
        }
        Ok(fp)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    /// Width is inferred from the string length.
    pub fn from_hex(text: &str) -> Result<Fingerprint, FingerprintError> {
        let bytes = hex::decode(text.trim()).map_err(|e| FingerprintError::Malformed(e.to_string()))?;
        Fingerprint::from_bytes(bytes.len() * 8, &bytes)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, 64 bit.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Radius-0 identifier of every atom; `None` for hydrogen nodes.
pub fn initial_invariants(mol: &Molecule) -> Vec<Option<u64>> {
    (0..mol.atom_count())
        .map(|i| {
            let a = &mol.atoms[i];
            if a.is_hydrogen() {
                return None;
            }
            let bytes = [
                a.element,
                mol.heavy_degree(i) as u8,
                mol.total_h(i),
                a.formal_charge as u8,
                u8::from(a.ring_member),
                u8::from(a.aromatic),
            ];
            Some(fnv1a(&bytes))
        })
        .collect()
}

/// Morgan identifiers of every heavy atom at every radius `0..=radius`.
/// `result[r][atom]` is `None` for hydrogen nodes.
pub fn atom_identifiers(mol: &Molecule, radius: usize) -> Vec<Vec<Option<u64>>> {
    let mut layers = vec![initial_invariants(mol)];
    let mut buf = Vec::with_capacity(64);
    let mut nbrs: Vec<(u8, u64)> = Vec::with_capacity(6);
    for _ in 0..radius {
        let ids = layers.last().unwrap();
        let next = (0..mol.atom_count())
            .map(|i| {
                let own = ids[i]?;
                nbrs.clear();
                for &(n, b) in mol.neighbors(i) {
                    if let Some(nid) = ids[n] {
                        nbrs.push((mol.bonds[b].order.code(), nid));
                    }
                }
                nbrs.sort_unstable();
                buf.clear();
                buf.extend_from_slice(&own.to_le_bytes());
                for &(code, nid) in &nbrs {
                    buf.push(code);
                    buf.extend_from_slice(&nid.to_le_bytes());
                }
                Some(fnv1a(&buf))
            })
            .collect();
        layers.push(next);
    }
    layers
}

/// Morgan fingerprint folded to `width` bits.
pub fn ecfp(mol: &Molecule, radius: usize, width: usize) -> Result<Fingerprint, FingerprintError> {
    check_width(width)?;
    if !mol.is_valid() {
        return Err(FingerprintError::InvalidMolecule);
    }
    let mut fp = Fingerprint::empty(width, radius)?;
    let mask = (width - 1) as u64;
    for layer in atom_identifiers(mol, radius) {
        for id in layer.iter().flatten() {
            fp.set((id & mask) as usize);
        }
    }
    Ok(fp)
}

/// ECFP4 at 1024 bits.
pub fn ecfp4(mol: &Molecule) -> Result<Fingerprint, FingerprintError> {
    ecfp(mol, DEFAULT_RADIUS, DEFAULT_WIDTH)
}

/// |a ∧ b| / |a ∨ b|, or 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.width != b.width {
        return Err(FingerprintError::WidthMismatch(a.width, b.width));
    }
    Ok(tanimoto_unchecked(a, b))
}

/// Same as [`tanimoto`] but assumes equal widths. Used on hot paths where the
/// widths were checked once up front.
pub fn tanimoto_unchecked(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        1.0
    } else {
        f64::from(inter) / f64::from(union)
    }
}

pub fn write_cache<W: Write>(mut w: W, records: &[(String, Fingerprint)]) -> Result<(), FingerprintError> {
    w.write_all(CACHE_MAGIC)?;
    for (id, fp) in records {
        let len = u16::try_from(id.len())
            .map_err(|_| FingerprintError::Malformed(format!("id too long: {} bytes", id.len())))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        w.write_all(&(fp.width as u32).to_le_bytes())?;
        w.write_all(&fp.to_bytes())?;
    }
    Ok(())
}

pub fn read_cache<R: Read>(mut r: R) -> Result<Vec<(String, Fingerprint)>, FingerprintError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() < 4 || &data[..4] != CACHE_MAGIC {
        return Err(FingerprintError::Malformed("missing AFP1 magic".into()));
    }
    let mut pos = 4;
    let mut take = |n: usize| -> Result<&[u8], FingerprintError> {
        let slice = data.get(pos..pos + n).ok_or_else(|| FingerprintError::Malformed("truncated record".into()))?;
        pos += n;
        Ok(slice)
    };
    let mut out = Vec::new();
    while let Ok(head) = take(2) {
        let len = u16::from_le_bytes([head[0], head[1]]) as usize;
        let id = String::from_utf8(take(len)?.to_vec())
            .map_err(|_| FingerprintError::Malformed("id is not UTF-8".into()))?;
        let wb = take(4)?;
        let width = u32::from_le_bytes([wb[0], wb[1], wb[2], wb[3]]) as usize;
        check_width(width)?;
        let fp = Fingerprint::from_bytes(width, take(width / 8)?)?;
        out.push((id, fp));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn fp(s: &str) -> Fingerprint {
        ecfp4(&parse_smiles(s).unwrap()).unwrap()
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tanimoto_set_arithmetic() {
        let a = Fingerprint::from_bits(64, [1, 2, 3]).unwrap();
        let b = Fingerprint::from_bits(64, [2, 3, 4]).unwrap();
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = Fingerprint::from_bits(64, [10, 11]).unwrap();
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        let e = Fingerprint::empty(64, 0).unwrap();
        assert_eq!(tanimoto(&e, &e).unwrap(), 1.0);
        let w = Fingerprint::empty(128, 0).unwrap();
        assert!(matches!(tanimoto(&a, &w), Err(FingerprintError::WidthMismatch(64, 128))));
    }

    #[test]
    fn spelling_does_not_matter() {
        assert_eq!(fp("OCC"), fp("CCO"));
        assert_eq!(fp("c1ccccc1O"), fp("Oc1ccccc1"));
        assert_eq!(fp("[H]OCC"), fp("CCO"));
    }

    // bit sets from an independent re-implementation of the hashing scheme
    #[test]
    fn frozen_bit_fixtures() {
        let cases: [(&str, &[usize]); 6] = [
            ("C", &[269, 300, 783]),
            ("O", &[39, 459, 833]),
            ("CCO", &[27, 125, 263, 307, 482, 691, 837, 865, 940]),
            ("c1ccccc1", &[105, 630, 782]),
            (
                "CC(=O)Oc1ccccc1C(=O)O",
                &[
                    27, 37, 64, 105, 109, 149, 158, 162, 164, 195, 271, 294, 307, 348, 369, 446, 557, 575, 588, 592,
                    611, 630, 657, 752, 814, 870, 930, 933,
                ],
            ),
            ("C[NH3+]", &[27, 49, 297, 757, 799]),
        ];
        for (smi, bits) in cases {
            let got: Vec<usize> = fp(smi).on_bits().collect();
            assert_eq!(got, bits, "{smi}");
        }
        assert_ne!(fp("C"), fp("O"));
    }

    #[test]
    fn radius_zero_ethanol() {
        let m = parse_smiles("CCO").unwrap();
        let f = ecfp(&m, 0, 1024).unwrap();
        assert!(f.popcount() <= 3);
    }

    #[test]
    fn invalid_molecule_is_rejected() {
        let m = parse_smiles("CC(C)(C)(C)C");
        if let Ok(m) = m {
            assert!(matches!(ecfp4(&m), Err(FingerprintError::InvalidMolecule)));
        }
        assert!(matches!(Fingerprint::empty(100, 2), Err(FingerprintError::InvalidWidth(100))));
    }

    #[test]
    fn hex_and_bytes_round_trip() {
        let a = fp("CC(=O)Oc1ccccc1C(=O)O");
        let h = a.to_hex();
        assert_eq!(h.len(), 256);
        let b = Fingerprint::from_hex(&h).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(tanimoto(&a, &b).unwrap(), 1.0);
        let small = Fingerprint::from_bits(8, [0, 7]).unwrap();
        assert_eq!(small.to_bytes(), vec![0b1000_0001]);
    }

    #[test]
    fn cache_round_trip_and_layout() {
        let recs = vec![("a".to_string(), Fingerprint::from_bits(8, [1]).unwrap()), ("bb".to_string(), fp("CCO"))];
        let mut buf = Vec::new();
        write_cache(&mut buf, &recs).unwrap();
        assert_eq!(&buf[..4], b"AFP1");
        assert_eq!(&buf[4..12], &[1, 0, b'a', 8, 0, 0, 0, 0b10]);
        let back = read_cache(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].0, "bb");
        assert_eq!(back[1].1.to_bytes(), recs[1].1.to_bytes());
        assert!(read_cache(&buf[..buf.len() - 1]).is_err());
        assert!(read_cache(&b"AFP0"[..]).is_err());
    }
}
