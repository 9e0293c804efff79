//! Little-endian binary containers.
//!
//! Checkpoint (`TPK1`):
//! `magic · u32 layer_count · per layer {u32 d_in, u32 d_out, u8 has_bias,
//! u8 activation} · per layer {d_out·d_in f64 row-major weights, d_out f64
//! bias if present} · u32 meta_count · meta {u32 len, key, u32 len, value}`.
//!
//! Activation dump (`TPA1`):
//! `magic · u32 layer_index · u32 N, L, d_in, d_out · f64 h_in · f64 h_out`.
//!
//! Calibration pair (`TPC1`), the same samples rendered for two models:
//! `magic · u32 N · u32 L_a, d_a · u32 L_b, d_b · f64 inputs_a · f64 inputs_b`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::checkpoint::{Activation, Checkpoint, LayerSpec};
use super::forward::ActivationRecord;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor::Tensor3;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TPK1";
pub const ACTIVATION_MAGIC: [u8; 4] = *b"TPA1";
pub const CALIBRATION_MAGIC: [u8; 4] = *b"TPC1";

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().expect("4 bytes");
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::CountMismatch(format!("{what}: {n} values overflow")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)?;
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::InvalidArgument(format!("{what} is not utf-8")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CountMismatch(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&CHECKPOINT_MAGIC);
    w.u32(ckpt.depth())?;
    for s in ckpt.specs() {
        w.u32(s.d_in)?;
        w.u32(s.d_out)?;
        w.u8(s.has_bias as u8);
        w.u8(s.activation.code());
    }
    for l in 0..ckpt.depth() {
        w.f64s(ckpt.weight(l).as_slice());
        if let Some(b) = ckpt.bias(l) {
            w.f64s(b);
        }
    }
    w.u32(ckpt.meta.len())?;
    for (k, v) in &ckpt.meta {
        w.str(k)?;
        w.str(v)?;
    }
    Ok(w.0)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(buf);
    r.magic(CHECKPOINT_MAGIC)?;
    let count = r.u32("layer count")?;
    // each header is 10 bytes; reject absurd counts before allocating
    if count.saturating_mul(10) > buf.len() {
        return Err(Error::Truncated(format!(
            "{count} layer headers do not fit in {} bytes",
            buf.len()
        )));
    }
    let mut specs = Vec::with_capacity(count);
    for l in 0..count {
        let d_in = r.u32("d_in")?;
        let d_out = r.u32("d_out")?;
        let has_bias = match r.u8("has_bias")? {
            0 => false,
            1 => true,
            v => return Err(Error::InvalidArgument(format!("layer {l}: has_bias byte {v}"))),
        };
        let code = r.u8("activation")?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::InvalidArgument(format!("layer {l}: unknown activation {code}")))?;
        specs.push(LayerSpec::new(d_in, d_out, has_bias, activation));
    }
    let mut weights = Vec::with_capacity(count);
    let mut biases = Vec::with_capacity(count);
    for (l, s) in specs.iter().enumerate() {
        let n = s
            .d_out
            .checked_mul(s.d_in)
            .ok_or_else(|| Error::CountMismatch(format!("layer {l} dimensions overflow")))?;
        let w = r.f64s(n, "weights")?;
        weights.push(Matrix::from_vec(s.d_out, s.d_in, w)?);
        biases.push(if s.has_bias {
            Some(r.f64s(s.d_out, "bias")?)
        } else {
            None
        });
    }
    let meta_count = r.u32("meta count")?;
    let mut meta = BTreeMap::new();
    for _ in 0..meta_count {
        let k = r.string("meta key")?;
        let v = r.string("meta value")?;
        meta.insert(k, v);
    }
    r.finish()?;
    if meta.len() != meta_count {
        return Err(Error::CountMismatch("duplicate metadata keys".into()));
    }
    Checkpoint::new(specs, weights, biases, meta)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

pub fn encode_activations(rec: &ActivationRecord) -> Result<Vec<u8>> {
    let (n, l, d_in) = rec.h_in.shape();
    let (n2, l2, d_out) = rec.h_out.shape();
    if (n, l) != (n2, l2) {
        return Err(Error::Dimension(format!("h_in is {n}x{l}, h_out is {n2}x{l2}")));
    }
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&ACTIVATION_MAGIC);
    w.u32(rec.layer_index)?;
    w.u32(n)?;
    w.u32(l)?;
    w.u32(d_in)?;
    w.u32(d_out)?;
    w.f64s(rec.h_in.as_slice());
    w.f64s(rec.h_out.as_slice());
    Ok(w.0)
}

pub fn decode_activations(buf: &[u8]) -> Result<ActivationRecord> {
    let mut r = Reader::new(buf);
    r.magic(ACTIVATION_MAGIC)?;
    let layer_index = r.u32("layer index")?;
    let n = r.u32("N")?;
    let l = r.u32("L")?;
    let d_in = r.u32("d_in")?;
    let d_out = r.u32("d_out")?;
    let h_in = r.f64s(n.saturating_mul(l).saturating_mul(d_in), "h_in")?;
    let h_out = r.f64s(n.saturating_mul(l).saturating_mul(d_out), "h_out")?;
    r.finish()?;
    Ok(ActivationRecord {
        layer_index,
        h_in: Tensor3::from_vec(n, l, d_in, h_in)?,
        h_out: Tensor3::from_vec(n, l, d_out, h_out)?,
    })
}

pub fn save_activations(rec: &ActivationRecord, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_activations(rec)?)?;
    Ok(())
}

pub fn load_activations(path: impl AsRef<Path>) -> Result<ActivationRecord> {
    decode_activations(&fs::read(path)?)
}

/// Same raw samples rendered into the input spaces of models A and B.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPair {
    pub inputs_a: Tensor3,
    pub inputs_b: Tensor3,
}

impl CalibrationPair {
    pub fn new(inputs_a: Tensor3, inputs_b: Tensor3) -> Result<Self> {
        if inputs_a.n() != inputs_b.n() {
            return Err(Error::CountMismatch(format!(
                "calibration sides hold {} and {} samples",
                inputs_a.n(),
                inputs_b.n()
            )));
        }
        Ok(CalibrationPair { inputs_a, inputs_b })
    }
}

pub fn encode_calibration(pair: &CalibrationPair) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&CALIBRATION_MAGIC);
    w.u32(pair.inputs_a.n())?;
    w.u32(pair.inputs_a.len())?;
    w.u32(pair.inputs_a.dim())?;
    w.u32(pair.inputs_b.len())?;
    w.u32(pair.inputs_b.dim())?;
    w.f64s(pair.inputs_a.as_slice());
    w.f64s(pair.inputs_b.as_slice());
    Ok(w.0)
}

pub fn decode_calibration(buf: &[u8]) -> Result<CalibrationPair> {
    let mut r = Reader::new(buf);
    r.magic(CALIBRATION_MAGIC)?;
    let n = r.u32("N")?;
    let (la, da) = (r.u32("L_a")?, r.u32("d_a")?);
    let (lb, db) = (r.u32("L_b")?, r.u32("d_b")?);
    let a = r.f64s(n.saturating_mul(la).saturating_mul(da), "inputs_a")?;
    let b = r.f64s(n.saturating_mul(lb).saturating_mul(db), "inputs_b")?;
    r.finish()?;
    CalibrationPair::new(Tensor3::from_vec(n, la, da, a)?, Tensor3::from_vec(n, lb, db, b)?)
}

pub fn save_calibration(pair: &CalibrationPair, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_calibration(pair)?)?;
    Ok(())
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationPair> {
    decode_calibration(&fs::read(path)?)
}
