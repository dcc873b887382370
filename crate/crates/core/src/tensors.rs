//! Named weight tensors, the NTF checkpoint format, and layer pairing.
//!
//! NTF layout (bit-exact):
//!   bytes 0..4    magic "NTF1"
//!   bytes 4..12   unsigned little-endian 64-bit header length H
//!   bytes 12..12+H  UTF-8 JSON header
//!   rest          concatenated little-endian 32-bit float payload
//!
//! The JSON header is `{"format_version":1,"metadata":{...},"tensors":[...]}`
//! with per-tensor `{"name","kind","layer","shape","offset","length"}`,
//! offset/length counted in floats into the payload. Offsets must be
//! contiguous and in tensor order. Metadata keys are sorted, so writing the
//! same checkpoint always produces the same bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NTF_MAGIC: &[u8; 4] = b"NTF1";
pub const NTF_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Weight,
    Bias,
}

/// A named, shaped, row-major f32 tensor belonging to one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub kind: TensorKind,
    pub layer: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl NamedTensor {
    /// Builds a tensor, deriving its layer id from the name.
    pub fn new(
        name: impl Into<String>,
        kind: TensorKind,
        shape: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let name = name.into();
        let layer = layer_of(&name).to_string();
        let tensor = NamedTensor {
            name,
            kind,
            layer,
            shape,
            values,
        };
        tensor.validate()?;
        Ok(tensor)
    }

    pub fn validate(&self) -> Result<()> {
        let expected: usize = self.shape.iter().product();
        if self.shape.iter().any(|&d| d == 0) {
            return Err(Error::TensorShape {
                tensor: self.name.clone(),
                message: "shape dimensions must be positive".into(),
            });
        }
        if expected != self.values.len() {
            return Err(Error::TensorShape {
                tensor: self.name.clone(),
                message: format!(
                    "shape {:?} implies {} values, got {}",
                    self.shape,
                    expected,
                    self.values.len()
                ),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                tensor: self.name.clone(),
            });
        }
        Ok(())
    }
}

/// Layer id of a tensor name: the longest dot-separated prefix
/// ("conv1.weight" -> "conv1", "features.0.weight" -> "features.0").
/// Names without a dot are their own layer.
pub fn layer_of(name: &str) -> &str {
    match name.rsplit_once('.') {
        Some((prefix, _)) => prefix,
        None => name,
    }
}

/// An ordered set of named tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub tensors: Vec<NamedTensor>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(tensors: Vec<NamedTensor>, metadata: BTreeMap<String, String>) -> Result<Self> {
        let ckpt = Checkpoint {
            format_version: NTF_FORMAT_VERSION,
            tensors,
            metadata,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.tensors {
            t.validate()?;
            if !seen.insert(&t.name) {
                return Err(Error::DuplicateTensor {
                    offset: 12,
                    name: t.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Layer ids in first-appearance (serialized) order.
    pub fn layer_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.tensors {
            if seen.insert(t.layer.as_str()) {
                out.push(t.layer.as_str());
            }
        }
        out
    }

    pub fn tensors_of_layer(&self, layer: &str) -> Vec<&NamedTensor> {
        self.tensors.iter().filter(|t| t.layer == layer).collect()
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Serialize, Deserialize)]
struct NtfHeader {
    format_version: u32,
    metadata: BTreeMap<String, String>,
    tensors: Vec<NtfTensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct NtfTensorMeta {
    name: String,
    kind: TensorKind,
    layer: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

/// Serializes a checkpoint to NTF, returning the byte count written.
pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, dest: &mut W) -> Result<u64> {
    ckpt.validate()?;
    let mut metas = Vec::with_capacity(ckpt.tensors.len());
    let mut offset = 0u64;
    for t in &ckpt.tensors {
        let length = t.values.len() as u64;
        metas.push(NtfTensorMeta {
            name: t.name.clone(),
            kind: t.kind,
            layer: t.layer.clone(),
            shape: t.shape.clone(),
            offset,
            length,
        });
        offset += length;
    }
    let header = NtfHeader {
        format_version: ckpt.format_version,
        metadata: ckpt.metadata.clone(),
        tensors: metas,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::invalid(format!("NTF header: {e}")))?;

    dest.write_all(NTF_MAGIC)?;
    dest.write_all(&(header_json.len() as u64).to_le_bytes())?;
    dest.write_all(&header_json)?;
    let mut written = 12 + header_json.len() as u64;
    for t in &ckpt.tensors {
        for v in &t.values {
            dest.write_all(&v.to_le_bytes())?;
        }
        written += 4 * t.values.len() as u64;
    }
    Ok(written)
}

pub fn write_checkpoint_file(ckpt: &Checkpoint, path: &std::path::Path) -> Result<u64> {
    let mut buf = Vec::new();
    let n = write_checkpoint(ckpt, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(n)
}

/// Reads a checkpoint, verifying invariants on load.
pub fn read_checkpoint<R: Read>(source: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    source
        .read_exact(&mut magic)
        .map_err(|_| Error::NotNtf { offset: 0 })?;
    if &magic != NTF_MAGIC {
        return Err(Error::NotNtf { offset: 0 });
    }
    let mut len_bytes = [0u8; 8];
    source.read_exact(&mut len_bytes).map_err(|_| Error::NtfHeader {
        offset: 4,
        message: "truncated header length".into(),
    })?;
    let header_len = u64::from_le_bytes(len_bytes);

    let mut header_json = vec![0u8; header_len as usize];
    source.read_exact(&mut header_json).map_err(|_| Error::NtfHeader {
        offset: 12,
        message: format!("truncated header: expected {header_len} bytes"),
    })?;
    let header: NtfHeader = serde_json::from_slice(&header_json).map_err(|e| Error::NtfHeader {
        offset: 12,
        message: e.to_string(),
    })?;

    let payload_offset = 12 + header_len;
    let mut seen = HashMap::new();
    let mut expected_offset = 0u64;
    for meta in &header.tensors {
        if let Some(_prev) = seen.insert(meta.name.clone(), ()) {
            return Err(Error::DuplicateTensor {
                offset: 12,
                name: meta.name.clone(),
            });
        }
        if meta.offset != expected_offset {
            return Err(Error::NtfHeader {
                offset: 12,
                message: format!(
                    "tensor '{}' offset {} not contiguous (expected {})",
                    meta.name, meta.offset, expected_offset
                ),
            });
        }
        expected_offset += meta.length;
    }

    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    let expected_bytes = expected_offset * 4;
    if payload.len() as u64 != expected_bytes {
        return Err(Error::PayloadLength {
            offset: payload_offset,
            expected: expected_bytes,
            actual: payload.len() as u64,
        });
    }

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for meta in header.tensors {
        let start = meta.offset as usize * 4;
        let end = start + meta.length as usize * 4;
        let values: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = NamedTensor {
            name: meta.name,
            kind: meta.kind,
            layer: meta.layer,
            shape: meta.shape,
            values,
        };
        tensor.validate()?;
        tensors.push(tensor);
    }
    Ok(Checkpoint {
        format_version: header.format_version,
        tensors,
        metadata: header.metadata,
    })
}

pub fn read_checkpoint_file(path: &std::path::Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

/// One layer matched across two checkpoints. Tensor lists are index-aligned:
/// `tensors_a[i]` and `tensors_b[i]` share name and shape.
#[derive(Debug, Clone)]
pub struct LayerPair<'a> {
    pub layer: String,
    pub tensors_a: Vec<&'a NamedTensor>,
    pub tensors_b: Vec<&'a NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmatchedLayer {
    pub layer: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LayerPairing<'a> {
    pub pairs: Vec<LayerPair<'a>>,
    pub unmatched_a: Vec<UnmatchedLayer>,
    pub unmatched_b: Vec<UnmatchedLayer>,
}

/// Pairs layers of two checkpoints by identical layer id.
///
/// Layers named in `exclusion` are omitted entirely (the caller decides which
/// layer is the replaced output layer). A layer pairs only if both sides hold
/// the same tensor names with the same shapes; otherwise it lands in both
/// unmatched lists with a reason. Mismatches are reported, never fatal.
pub fn pair_layers<'a>(
    a: &'a Checkpoint,
    b: &'a Checkpoint,
    exclusion: &BTreeSet<String>,
) -> LayerPairing<'a> {
    let mut pairs = Vec::new();
    let mut unmatched_a = Vec::new();
    let mut unmatched_b = Vec::new();

    let layers_a: BTreeSet<&str> = a.layer_ids().into_iter().collect();
    let layers_b: BTreeSet<&str> = b.layer_ids().into_iter().collect();

    for layer in a.layer_ids() {
        if exclusion.contains(layer) {
            continue;
        }
        if !layers_b.contains(layer) {
            unmatched_a.push(UnmatchedLayer {
                layer: layer.to_string(),
                reason: "missing in other checkpoint".into(),
            });
            continue;
        }
        let ta = a.tensors_of_layer(layer);
        let tb = b.tensors_of_layer(layer);
        match align_tensors(&ta, &tb) {
            Ok(aligned_b) => pairs.push(LayerPair {
                layer: layer.to_string(),
                tensors_a: ta,
                tensors_b: aligned_b,
            }),
            Err(reason) => {
                unmatched_a.push(UnmatchedLayer {
                    layer: layer.to_string(),
                    reason: reason.clone(),
                });
                unmatched_b.push(UnmatchedLayer {
                    layer: layer.to_string(),
                    reason,
                });
            }
        }
    }
    for layer in b.layer_ids() {
        if exclusion.contains(layer) {
            continue;
        }
        if !layers_a.contains(layer) {
            unmatched_b.push(UnmatchedLayer {
                layer: layer.to_string(),
                reason: "missing in other checkpoint".into(),
            });
        }
    }
    LayerPairing {
        pairs,
        unmatched_a,
        unmatched_b,
    }
}

/// Reorders `tb` to match `ta` by name, or explains why that is impossible.
fn align_tensors<'a>(
    ta: &[&'a NamedTensor],
    tb: &[&'a NamedTensor],
) -> std::result::Result<Vec<&'a NamedTensor>, String> {
    if ta.len() != tb.len() {
        return Err(format!("tensor count mismatch: {} vs {}", ta.len(), tb.len()));
    }
    let mut aligned = Vec::with_capacity(ta.len());
    for t in ta {
        match tb.iter().find(|u| u.name == t.name) {
            None => return Err(format!("tensor '{}' missing on one side", t.name)),
            Some(u) if u.shape != t.shape => {
                return Err(format!(
                    "shape mismatch for '{}': {:?} vs {:?}",
                    t.name, t.shape, u.shape
                ))
            }
            Some(u) => aligned.push(*u),
        }
    }
    Ok(aligned)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt_with(tensors: Vec<NamedTensor>) -> Checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("model_id".into(), "test".into());
        meta.insert("created_by".into(), "unit-test".into());
        Checkpoint::new(tensors, meta).unwrap()
    }

    fn simple_tensor(name: &str, shape: Vec<usize>, values: Vec<f32>) -> NamedTensor {
        let kind = if name.ends_with("bias") {
            TensorKind::Bias
        } else {
            TensorKind::Weight
        };
        NamedTensor::new(name, kind, shape, values).unwrap()
    }

    #[test]
    fn layer_id_is_longest_dot_prefix() {
        assert_eq!(layer_of("conv1.weight"), "conv1");
        assert_eq!(layer_of("features.0.weight"), "features.0");
        assert_eq!(layer_of("bias"), "bias");
    }

    #[test]
    fn round_trip_preserves_values_and_order() {
        let ckpt = ckpt_with(vec![simple_tensor(
            "fc1.weight",
            vec![2, 2],
            vec![1.0, 2.0, 3.0, 4.0],
        )]);
        let mut buf = Vec::new();
        let n = write_checkpoint(&ckpt, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn empty_tensor_list_round_trips() {
        let ckpt = ckpt_with(vec![]);
        let mut buf = Vec::new();
        write_checkpoint(&ckpt, &mut buf).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn nan_refused_with_tensor_name() {
        let tensor = NamedTensor {
            name: "fc1.weight".into(),
            kind: TensorKind::Weight,
            layer: "fc1".into(),
            shape: vec![2],
            values: vec![1.0, f32::NAN],
        };
        let ckpt = Checkpoint {
            format_version: 1,
            tensors: vec![tensor],
            metadata: BTreeMap::new(),
        };
        let err = write_checkpoint(&ckpt, &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("fc1.weight"));
    }

    #[test]
    fn truncated_payload_reports_expected_vs_actual() {
        let ckpt = ckpt_with(vec![simple_tensor("w", vec![4], vec![1.0; 4])]);
        let mut buf = Vec::new();
        write_checkpoint(&ckpt, &mut buf).unwrap();
        buf.truncate(buf.len() - 5);
        let err = read_checkpoint(&mut buf.as_slice()).unwrap_err();
        match err {
            Error::PayloadLength {
                expected, actual, ..
            } => {
                assert_eq!(expected, 16);
                assert_eq!(actual, 11);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let err = read_checkpoint(&mut b"XXXX\0\0\0\0\0\0\0\0".as_slice()).unwrap_err();
        assert!(err.to_string().contains("not an NTF file"));
    }

    #[test]
    fn duplicate_name_rejected_on_read() {
        // Construct a header with a duplicated name by hand.
        let meta = NtfTensorMeta {
            name: "w".into(),
            kind: TensorKind::Weight,
            layer: "w".into(),
            shape: vec![1],
            offset: 0,
            length: 1,
        };
        let meta2 = NtfTensorMeta {
            name: "w".into(),
            kind: TensorKind::Weight,
            layer: "w".into(),
            shape: vec![1],
            offset: 1,
            length: 1,
        };
        let header = NtfHeader {
            format_version: 1,
            metadata: BTreeMap::new(),
            tensors: vec![meta, meta2],
        };
        let json = serde_json::to_vec(&header).unwrap();
        let mut buf = Vec::new();
        buf.extend_from_slice(NTF_MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        buf.extend_from_slice(&1.0f32.to_le_bytes());
        buf.extend_from_slice(&2.0f32.to_le_bytes());
        let err = read_checkpoint(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, Error::DuplicateTensor { .. }));
    }

    #[test]
    fn pair_identical_checkpoints() {
        let ckpt = ckpt_with(vec![
            simple_tensor("conv1.weight", vec![2], vec![1.0, 2.0]),
            simple_tensor("fc1.weight", vec![2], vec![3.0, 4.0]),
        ]);
        let pairing = pair_layers(&ckpt, &ckpt, &BTreeSet::new());
        assert_eq!(pairing.pairs.len(), 2);
        assert!(pairing.unmatched_a.is_empty());
        assert!(pairing.unmatched_b.is_empty());
    }

    #[test]
    fn exclusion_omits_layers() {
        let tensors = vec![
            simple_tensor("conv1.weight", vec![1], vec![1.0]),
            simple_tensor("fc1.weight", vec![1], vec![2.0]),
            simple_tensor("out.weight", vec![1], vec![3.0]),
        ];
        let a = ckpt_with(tensors.clone());
        let b = ckpt_with(tensors);
        let mut excl = BTreeSet::new();
        excl.insert("out".to_string());
        let pairing = pair_layers(&a, &b, &excl);
        let layers: Vec<&str> = pairing.pairs.iter().map(|p| p.layer.as_str()).collect();
        assert_eq!(layers, vec!["conv1", "fc1"]);
    }

    #[test]
    fn shape_mismatch_lands_in_both_unmatched_lists() {
        let a = ckpt_with(vec![simple_tensor("fc1.weight", vec![2], vec![1.0, 2.0])]);
        let b = ckpt_with(vec![simple_tensor(
            "fc1.weight",
            vec![3],
            vec![1.0, 2.0, 3.0],
        )]);
        let pairing = pair_layers(&a, &b, &BTreeSet::new());
        assert!(pairing.pairs.is_empty());
        assert_eq!(pairing.unmatched_a.len(), 1);
        assert_eq!(pairing.unmatched_b.len(), 1);
        assert!(pairing.unmatched_a[0].reason.contains("shape mismatch"));
        assert!(pairing.unmatched_b[0].reason.contains("shape mismatch"));
    }

    #[test]
    fn pairing_is_symmetric_up_to_role_swap() {
        let a = ckpt_with(vec![
            simple_tensor("conv1.weight", vec![2], vec![1.0, 2.0]),
            simple_tensor("solo.weight", vec![1], vec![5.0]),
        ]);
        let b = ckpt_with(vec![simple_tensor("conv1.weight", vec![2], vec![9.0, 8.0])]);
        let ab = pair_layers(&a, &b, &BTreeSet::new());
        let ba = pair_layers(&b, &a, &BTreeSet::new());
        let ab_layers: Vec<_> = ab.pairs.iter().map(|p| p.layer.clone()).collect();
        let ba_layers: Vec<_> = ba.pairs.iter().map(|p| p.layer.clone()).collect();
        assert_eq!(ab_layers, ba_layers);
        assert_eq!(
            ab.unmatched_a.iter().map(|u| &u.layer).collect::<Vec<_>>(),
            ba.unmatched_b.iter().map(|u| &u.layer).collect::<Vec<_>>()
        );
    }
}
