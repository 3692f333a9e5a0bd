//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SEPC" | version u32 | kind u8 (0 float, 1 fixed)
//! [fixed only] input_scale f64
//! layer_count u32
//! layer records...
//! ```
//!
//! Float records carry a dtype tag (f32 or f64) and raw weight payloads;
//! q16 records carry one f64 scale followed by i16 values per tensor, plus
//! the calibrated activation scales. Saving is deterministic, so identical
//! models produce byte-identical files, and `load(save(m))` round-trips
//! payloads bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::activation::Activation;
use crate::conv::classic::{ClassicConvLayer, FilterBank};
use crate::conv::separated::SeparatedConvParams;
use crate::network::{DenseLayer, Layer, Network};
use crate::quant::{
    FixedClassicConv, FixedDense, FixedLayer, FixedNetwork, FixedSeparatedConv, FixedTensor,
};
use crate::tensor::ShapeError;

pub const MODEL_MAGIC: [u8; 4] = *b"SEPC";
pub const MODEL_VERSION: u32 = 1;

const KIND_FLOAT: u8 = 0;
const KIND_FIXED: u8 = 1;

const TAG_CLASSIC: u8 = 1;
const TAG_SEPARATED: u8 = 2;
const TAG_DENSE: u8 = 3;
const TAG_SOFTMAX: u8 = 4;

const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;
const DTYPE_Q16: u8 = 3;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io error: {0}")]
    Io(std::io::Error),
    #[error("bad magic {0:?}, not a model file")]
    BadMagic([u8; 4]),
    #[error("unsupported model version {0} (expected {MODEL_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model file is truncated")]
    Truncated,
    #[error("unknown payload kind {0}")]
    BadKind(u8),
    #[error("unknown layer tag {0}")]
    BadLayerTag(u8),
    #[error("unknown dtype tag {0}")]
    BadDtype(u8),
    #[error("unknown activation tag {0}")]
    BadActivation(u8),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

impl From<std::io::Error> for ModelIoError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ModelIoError::Truncated
        } else {
            ModelIoError::Io(e)
        }
    }
}

/// Width float networks are written with. Training always produces f64;
/// f32 halves the file for benchmark-only models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatWidth {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Float(Network),
    Fixed(FixedNetwork),
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Rectifier => 1,
        Activation::Tanh => 2,
    }
}

fn activation_from(tag: u8) -> Result<Activation, ModelIoError> {
    match tag {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Rectifier),
        2 => Ok(Activation::Tanh),
        t => Err(ModelIoError::BadActivation(t)),
    }
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<(), ModelIoError> {
        self.inner.write_all(&[v])?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<(), ModelIoError> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<(), ModelIoError> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn floats(&mut self, values: &[f64], width: FloatWidth) -> Result<(), ModelIoError> {
        match width {
            FloatWidth::F64 => {
                for v in values {
                    self.inner.write_all(&v.to_le_bytes())?;
                }
            }
            FloatWidth::F32 => {
                for v in values {
                    self.inner.write_all(&(*v as f32).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }
    fn q16(&mut self, t: &FixedTensor) -> Result<(), ModelIoError> {
        self.f64(t.scale)?;
        for v in &t.values {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8, ModelIoError> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<u32, ModelIoError> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64, ModelIoError> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn floats(&mut self, len: usize, dtype: u8) -> Result<Vec<f64>, ModelIoError> {
        let mut out = Vec::with_capacity(len);
        match dtype {
            DTYPE_F64 => {
                for _ in 0..len {
                    out.push(self.f64()?);
                }
            }
            DTYPE_F32 => {
                for _ in 0..len {
                    let mut b = [0u8; 4];
                    self.inner.read_exact(&mut b)?;
                    out.push(f32::from_le_bytes(b) as f64);
                }
            }
            t => return Err(ModelIoError::BadDtype(t)),
        }
        Ok(out)
    }
    fn q16(&mut self, len: usize, shape: Vec<usize>) -> Result<FixedTensor, ModelIoError> {
        let scale = self.f64()?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let mut b = [0u8; 2];
            self.inner.read_exact(&mut b)?;
            values.push(i16::from_le_bytes(b));
        }
        Ok(FixedTensor {
            shape,
            values,
            scale,
        })
    }
}

fn float_dtype(width: FloatWidth) -> u8 {
    match width {
        FloatWidth::F32 => DTYPE_F32,
        FloatWidth::F64 => DTYPE_F64,
    }
}

fn write_float_network<W: Write>(
    w: &mut Writer<W>,
    net: &Network,
    width: FloatWidth,
) -> Result<(), ModelIoError> {
    w.u32(net.layers.len() as u32)?;
    for layer in &net.layers {
        match layer {
            Layer::Classic(conv) => {
                w.u8(TAG_CLASSIC)?;
                w.u32(conv.filters.kh() as u32)?;
                w.u32(conv.filters.kw() as u32)?;
                w.u32(conv.filters.in_channels() as u32)?;
                w.u32(conv.filters.count() as u32)?;
                w.u8(activation_tag(conv.activation))?;
                w.u8(float_dtype(width))?;
                w.floats(conv.filters.weights(), width)?;
                w.floats(&conv.bias, width)?;
            }
            Layer::Separated {
                params,
                fusion_frozen,
            } => {
                w.u8(TAG_SEPARATED)?;
                w.u32(params.k() as u32)?;
                w.u32(params.in_channels() as u32)?;
                w.u32(params.count() as u32)?;
                w.u8(activation_tag(params.activation()))?;
                w.u8(u8::from(*fusion_frozen))?;
                w.u8(float_dtype(width))?;
                w.floats(params.vertical(), width)?;
                w.floats(params.horizontal(), width)?;
                w.floats(params.fusion(), width)?;
                w.floats(params.bias(), width)?;
            }
            Layer::Dense(dense) => {
                w.u8(TAG_DENSE)?;
                w.u32(dense.in_features as u32)?;
                w.u32(dense.out_features as u32)?;
                w.u8(float_dtype(width))?;
                w.floats(&dense.weights, width)?;
                w.floats(&dense.bias, width)?;
            }
            Layer::Softmax => w.u8(TAG_SOFTMAX)?,
        }
    }
    Ok(())
}

fn write_fixed_network<W: Write>(
    w: &mut Writer<W>,
    net: &FixedNetwork,
) -> Result<(), ModelIoError> {
    w.f64(net.input_scale)?;
    w.u32(net.layers.len() as u32)?;
    for layer in &net.layers {
        match layer {
            FixedLayer::Classic(conv) => {
                w.u8(TAG_CLASSIC)?;
                w.u32(conv.kh as u32)?;
                w.u32(conv.kw as u32)?;
                w.u32(conv.in_channels as u32)?;
                w.u32(conv.count as u32)?;
                w.u8(activation_tag(conv.activation))?;
                w.u8(DTYPE_Q16)?;
                w.f64(conv.out_scale)?;
                w.q16(&conv.weights)?;
                w.floats(&conv.bias, FloatWidth::F64)?;
            }
            FixedLayer::Separated(conv) => {
                w.u8(TAG_SEPARATED)?;
                w.u32(conv.k as u32)?;
                w.u32(conv.in_channels as u32)?;
                w.u32(conv.count as u32)?;
                w.u8(activation_tag(conv.activation))?;
                w.u8(DTYPE_Q16)?;
                w.f64(conv.s1_scale)?;
                w.f64(conv.s2_scale)?;
                w.f64(conv.out_scale)?;
                w.q16(&conv.vertical)?;
                w.q16(&conv.horizontal)?;
                w.q16(&conv.fusion)?;
                w.floats(&conv.bias, FloatWidth::F64)?;
            }
            FixedLayer::Dense(dense) => {
                w.u8(TAG_DENSE)?;
                w.u32(dense.in_features as u32)?;
                w.u32(dense.out_features as u32)?;
                w.u8(DTYPE_Q16)?;
                w.f64(dense.out_scale)?;
                w.q16(&dense.weights)?;
                w.floats(&dense.bias, FloatWidth::F64)?;
            }
            FixedLayer::Softmax => w.u8(TAG_SOFTMAX)?,
        }
    }
    Ok(())
}

fn read_float_network<R: Read>(r: &mut Reader<R>) -> Result<Network, ModelIoError> {
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        match r.u8()? {
            TAG_CLASSIC => {
                let kh = r.u32()? as usize;
                let kw = r.u32()? as usize;
                let c = r.u32()? as usize;
                let l = r.u32()? as usize;
                let activation = activation_from(r.u8()?)?;
                let dtype = r.u8()?;
                let weights = r.floats(l * kh * kw * c, dtype)?;
                let bias = r.floats(l, dtype)?;
                layers.push(Layer::Classic(ClassicConvLayer::new(
                    FilterBank::new(kh, kw, c, l, weights)?,
                    bias,
                    activation,
                )?));
            }
            TAG_SEPARATED => {
                let k = r.u32()? as usize;
                let c = r.u32()? as usize;
                let l = r.u32()? as usize;
                let activation = activation_from(r.u8()?)?;
                let fusion_frozen = r.u8()? != 0;
                let dtype = r.u8()?;
                let vertical = r.floats(l * k * c, dtype)?;
                let horizontal = r.floats(l * k, dtype)?;
                let fusion = r.floats(l * l, dtype)?;
                let bias = r.floats(l, dtype)?;
                layers.push(Layer::Separated {
                    params: SeparatedConvParams::new(
                        k, c, l, vertical, horizontal, fusion, bias, activation,
                    )?,
                    fusion_frozen,
                });
            }
            TAG_DENSE => {
                let in_features = r.u32()? as usize;
                let out_features = r.u32()? as usize;
                let dtype = r.u8()?;
                let weights = r.floats(in_features * out_features, dtype)?;
                let bias = r.floats(out_features, dtype)?;
                layers.push(Layer::Dense(DenseLayer::new(
                    in_features,
                    out_features,
                    weights,
                    bias,
                )?));
            }
            TAG_SOFTMAX => layers.push(Layer::Softmax),
            t => return Err(ModelIoError::BadLayerTag(t)),
        }
    }
    Ok(Network { layers })
}

fn read_fixed_network<R: Read>(r: &mut Reader<R>) -> Result<FixedNetwork, ModelIoError> {
    let input_scale = r.f64()?;
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        match r.u8()? {
            TAG_CLASSIC => {
                let kh = r.u32()? as usize;
                let kw = r.u32()? as usize;
                let c = r.u32()? as usize;
                let l = r.u32()? as usize;
                let activation = activation_from(r.u8()?)?;
                let dtype = r.u8()?;
                if dtype != DTYPE_Q16 {
                    return Err(ModelIoError::BadDtype(dtype));
                }
                let out_scale = r.f64()?;
                let weights = r.q16(l * kh * kw * c, vec![l, kh, kw, c])?;
                let bias = r.floats(l, DTYPE_F64)?;
                layers.push(FixedLayer::Classic(FixedClassicConv {
                    kh,
                    kw,
                    in_channels: c,
                    count: l,
                    weights,
                    bias,
                    activation,
                    out_scale,
                }));
            }
            TAG_SEPARATED => {
                let k = r.u32()? as usize;
                let c = r.u32()? as usize;
                let l = r.u32()? as usize;
                let activation = activation_from(r.u8()?)?;
                let dtype = r.u8()?;
                if dtype != DTYPE_Q16 {
                    return Err(ModelIoError::BadDtype(dtype));
                }
                let s1_scale = r.f64()?;
                let s2_scale = r.f64()?;
                let out_scale = r.f64()?;
                let vertical = r.q16(l * k * c, vec![l, k, c])?;
                let horizontal = r.q16(l * k, vec![l, k])?;
                let fusion = r.q16(l * l, vec![l, l])?;
                let bias = r.floats(l, DTYPE_F64)?;
                layers.push(FixedLayer::Separated(FixedSeparatedConv {
                    k,
                    in_channels: c,
                    count: l,
                    vertical,
                    horizontal,
                    fusion,
                    bias,
                    activation,
                    s1_scale,
                    s2_scale,
                    out_scale,
                }));
            }
            TAG_DENSE => {
                let in_features = r.u32()? as usize;
                let out_features = r.u32()? as usize;
                let dtype = r.u8()?;
                if dtype != DTYPE_Q16 {
                    return Err(ModelIoError::BadDtype(dtype));
                }
                let out_scale = r.f64()?;
                let weights = r.q16(in_features * out_features, vec![out_features, in_features])?;
                let bias = r.floats(out_features, DTYPE_F64)?;
                layers.push(FixedLayer::Dense(FixedDense {
                    in_features,
                    out_features,
                    weights,
                    bias,
                    out_scale,
                }));
            }
            TAG_SOFTMAX => layers.push(FixedLayer::Softmax),
            t => return Err(ModelIoError::BadLayerTag(t)),
        }
    }
    Ok(FixedNetwork {
        input_scale,
        layers,
    })
}

pub fn save_model(path: &Path, model: &StoredModel, width: FloatWidth) -> Result<(), ModelIoError> {
    let mut w = Writer {
        inner: BufWriter::new(File::create(path)?),
    };
    w.inner.write_all(&MODEL_MAGIC)?;
    w.u32(MODEL_VERSION)?;
    match model {
        StoredModel::Float(net) => {
            w.u8(KIND_FLOAT)?;
            write_float_network(&mut w, net, width)?;
        }
        StoredModel::Fixed(net) => {
            w.u8(KIND_FIXED)?;
            write_fixed_network(&mut w, net)?;
        }
    }
    w.inner.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<StoredModel, ModelIoError> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let mut magic = [0u8; 4];
    r.inner.read_exact(&mut magic)?;
    if magic != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    match r.u8()? {
        KIND_FLOAT => Ok(StoredModel::Float(read_float_network(&mut r)?)),
        KIND_FIXED => Ok(StoredModel::Fixed(read_fixed_network(&mut r)?)),
        k => Err(ModelIoError::BadKind(k)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_digits;
    use crate::network::StructureKind;
    use crate::quant::quantize_network;

    fn sample_net(kind: StructureKind) -> Network {
        Network::digit_net(kind, 14, 20, 1, 10, 5, 4, Activation::Rectifier, 5)
    }

    #[test]
    fn float_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [
            StructureKind::Classic,
            StructureKind::Separated,
            StructureKind::SeparatedNoFuse,
        ] {
            let net = sample_net(kind);
            let a = dir.path().join("a.sepc");
            let b = dir.path().join("b.sepc");
            save_model(&a, &StoredModel::Float(net.clone()), FloatWidth::F64).unwrap();
            let loaded = load_model(&a).unwrap();
            assert_eq!(loaded, StoredModel::Float(net));
            save_model(&b, &loaded, FloatWidth::F64).unwrap();
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }

    #[test]
    fn f32_width_round_trips_its_own_payload() {
        let dir = tempfile::tempdir().unwrap();
        let net = sample_net(StructureKind::Separated);
        let a = dir.path().join("a32.sepc");
        let b = dir.path().join("b32.sepc");
        save_model(&a, &StoredModel::Float(net), FloatWidth::F32).unwrap();
        let loaded = load_model(&a).unwrap();
        save_model(&b, &loaded, FloatWidth::F32).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn fixed_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let net = sample_net(StructureKind::Separated);
        let calibration: Vec<_> = synthetic_digits(10, 1).images().to_vec();
        let fixed = quantize_network(&net, &calibration).unwrap();
        let a = dir.path().join("q.sepc");
        let b = dir.path().join("q2.sepc");
        save_model(&a, &StoredModel::Fixed(fixed.clone()), FloatWidth::F64).unwrap();
        let loaded = load_model(&a).unwrap();
        assert_eq!(loaded, StoredModel::Fixed(fixed));
        save_model(&b, &loaded, FloatWidth::F64).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn corrupted_magic_is_reported_as_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sepc");
        let net = sample_net(StructureKind::Classic);
        save_model(&path, &StoredModel::Float(net), FloatWidth::F64).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xFF;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelIoError::BadMagic(_))
        ));
    }

    #[test]
    fn future_version_is_reported_as_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sepc");
        let net = sample_net(StructureKind::Classic);
        save_model(&path, &StoredModel::Float(net), FloatWidth::F64).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let bumped = (MODEL_VERSION + 1).to_le_bytes();
        bytes[4..8].copy_from_slice(&bumped);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelIoError::UnsupportedVersion(v)) if v == MODEL_VERSION + 1
        ));
    }

    #[test]
    fn truncated_file_is_reported_as_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sepc");
        let net = sample_net(StructureKind::Separated);
        save_model(&path, &StoredModel::Float(net), FloatWidth::F64).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::Truncated)));
    }

    #[test]
    fn unknown_layer_tag_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sepc");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MODEL_MAGIC);
        bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        bytes.push(KIND_FLOAT);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(99);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelIoError::BadLayerTag(99))
        ));
    }
}
