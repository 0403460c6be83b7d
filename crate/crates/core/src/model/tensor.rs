//! Dense f64 tensors, the parameter visitor used for flattening, optimizers
//! and checkpoints, and the checkpoint file format.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;

use super::ModelError;

const CHECKPOINT_MAGIC: &[u8; 4] = b"AURO";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    /// Uniform in `[-scale, scale]`.
    pub fn uniform<R: Rng>(shape: &[usize], scale: f64, rng: &mut R) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.gen_range(-scale..=scale)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }
}

/// Anything holding named trainable tensors. Visiting order must be stable:
/// flattening, optimizer state and checkpoints all rely on it.
pub trait Params {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn param_count<P: Params + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, t| n += t.len());
    n
}

pub fn flatten<P: Params + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(p));
    p.visit("", &mut |_, t| out.extend_from_slice(&t.data));
    out
}

/// Overwrites every tensor from a flat vector produced by [`flatten`].
pub fn unflatten<P: Params + ?Sized>(p: &mut P, flat: &[f64]) -> Result<(), ModelError> {
    let expected = param_count(p);
    if flat.len() != expected {
        return Err(ModelError::ShapeMismatch(format!(
            "flat parameter vector has {} entries, model has {expected}",
            flat.len()
        )));
    }
    let mut pos = 0;
    p.visit_mut("", &mut |_, t| {
        let n = t.len();
        t.data.copy_from_slice(&flat[pos..pos + n]);
        pos += n;
    });
    Ok(())
}

pub fn zero_all<P: Params + ?Sized>(p: &mut P) {
    p.visit_mut("", &mut |_, t| t.fill(0.0));
}

pub fn all_finite<P: Params + ?Sized>(p: &P) -> bool {
    let mut ok = true;
    p.visit("", &mut |_, t| ok &= t.data.iter().all(|x| x.is_finite()));
    ok
}

/// `dst += scale * src`, tensor by tensor.
pub fn add_scaled<P: Params>(dst: &mut P, src: &P, scale: f64) {
    let flat = flatten(src);
    let mut pos = 0;
    dst.visit_mut("", &mut |_, t| {
        for x in t.data.iter_mut() {
            *x += scale * flat[pos];
            pos += 1;
        }
    });
}

pub fn named_tensors<P: Params + ?Sized>(p: &P) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    p.visit("", &mut |name, t| out.push((name, t.clone())));
    out
}

/// Copies tensors by name; every model tensor must be present with the same shape.
pub fn load_named<P: Params + ?Sized>(p: &mut P, tensors: &[(String, Tensor)]) -> Result<(), ModelError> {
    let map: BTreeMap<&str, &Tensor> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let mut err = None;
    p.visit_mut("", &mut |name, t| {
        if err.is_some() {
            return;
        }
        match map.get(name.as_str()) {
            None => err = Some(ModelError::Checkpoint(format!("missing tensor '{name}'"))),
            Some(src) if src.shape != t.shape => {
                err = Some(ModelError::ShapeMismatch(format!(
                    "tensor '{name}': checkpoint {:?}, model {:?}",
                    src.shape, t.shape
                )))
            }
            Some(src) => t.data.copy_from_slice(&src.data),
        }
    });
    err.map_or(Ok(()), Err)
}

pub fn write_checkpoint<W: Write>(mut w: W, tensors: &[(String, Tensor)]) -> Result<(), ModelError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, t) in tensors {
        let len =
            u16::try_from(name.len()).map_err(|_| ModelError::Checkpoint(format!("tensor name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let rank =
            u8::try_from(t.shape.len()).map_err(|_| ModelError::Checkpoint(format!("rank too large for '{name}'")))?;
        w.write_all(&[rank])?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &x in &t.data {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>, ModelError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("missing AURO magic".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut out = Vec::new();
    while cur.pos < data.len() {
        let len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| ModelError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = cur.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = cur.take(n * 4)?;
        let values = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect();
        out.push((name, Tensor { shape, data: values }));
    }
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let s = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or_else(|| ModelError::Checkpoint("truncated checkpoint".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Rounds every parameter through f32 so that a model matches what a
/// checkpoint round trip would produce.
pub fn round_to_f32<P: Params + ?Sized>(p: &mut P) {
    p.visit_mut("", &mut |_, t| {
        for x in t.data.iter_mut() {
            *x = f64::from(*x as f32);
        }
    });
}
