// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TraceIoError;
use crate::refmodel::{GradientVector, LayerTrace, Precision};

pub const MAGIC: [u8; 4] = *b"PSTR";
pub const FORMAT_VERSION: u32 = 1;

/// JSON header of a trace file. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub model_id: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub precision: Precision,
    pub tokenizer_id: String,
    pub prompt_text: String,
    pub prompt_id: String,
    /// Token the stored gradients were taken for.
    #[serde(default)]
    pub gradient_target: Option<u32>,
    /// Layers with a stored gradient, in payload order.
    #[serde(default)]
    pub gradient_layers: Vec<usize>,
    /// Vocabulary ids of the option letters `A, B, ...`; omitted when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub option_token_ids: Vec<u32>,
}

/// One prompt's last-position states, logits and optional suffix gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceBundle {
    pub header: TraceHeader,
    pub trace: LayerTrace,
    pub gradients: Vec<GradientVector>,
}

impl TraceBundle {
    /// Header fields are taken from the trace; gradients must share a target.
    pub fn new(
        trace: LayerTrace,
        gradients: Vec<GradientVector>,
        precision: Precision,
        tokenizer_id: impl Into<String>,
        prompt_text: impl Into<String>,
    ) -> Self {
        let header = TraceHeader {
            model_id: trace.model_id.clone(),
            num_layers: trace.num_layers(),
            hidden_dim: trace.hidden_dim(),
            vocab_size: trace.vocab_size(),
            precision,
            tokenizer_id: tokenizer_id.into(),
            prompt_text: prompt_text.into(),
            prompt_id: trace.prompt_id.clone(),
            gradient_target: gradients.first().map(|g| g.target),
            gradient_layers: gradients.iter().map(|g| g.layer).collect(),
            option_token_ids: Vec::new(),
        };
        Self {
            header,
            trace,
            gradients,
        }
    }

    pub fn gradient(&self, layer: usize) -> Option<&GradientVector> {
        self.gradients.iter().find(|g| g.layer == layer)
    }

    fn validate(&self) -> Result<(), TraceIoError> {
        let h = &self.header;
        let dim = |what: String| Err(TraceIoError::Dimension(what));
        if self.trace.hidden.len() != h.num_layers + 1 {
            return dim(format!(
                "header declares {} layers but {} hidden arrays are present",
                h.num_layers,
                self.trace.hidden.len()
            ));
        }
        for (l, v) in self.trace.hidden.iter().enumerate() {
            if v.len() != h.hidden_dim {
                return dim(format!("h^{l} has {} values, expected {}", v.len(), h.hidden_dim));
            }
        }
        if self.trace.logits.len() != h.vocab_size {
            return dim(format!("{} logits, expected {}", self.trace.logits.len(), h.vocab_size));
        }
        if h.gradient_layers.len() != self.gradients.len() {
            return dim(format!(
                "header lists {} gradient layers but {} gradients are present",
                h.gradient_layers.len(),
                self.gradients.len()
            ));
        }
        if !self.gradients.is_empty() && h.gradient_target.is_none() {
            return Err(TraceIoError::Header("gradients present without gradient_target".into()));
        }
        if let Some(&t) = h.option_token_ids.iter().find(|&&t| t as usize >= h.vocab_size) {
            return Err(TraceIoError::Header(format!("option token {t} outside vocabulary {}", h.vocab_size)));
        }
        if let Some(t) = h.gradient_target {
            if t as usize >= h.vocab_size {
                return Err(TraceIoError::Header(format!("gradient_target {t} outside vocabulary {}", h.vocab_size)));
            }
        }
        for (g, &layer) in self.gradients.iter().zip(&h.gradient_layers) {
            if g.layer != layer || layer > h.num_layers {
                return dim(format!("gradient layer {} does not match header entry {layer}", g.layer));
            }
            if Some(g.target) != h.gradient_target {
                return Err(TraceIoError::Header(format!("gradient at layer {layer} has a different target")));
            }
            if g.grad.len() != h.hidden_dim {
                return dim(format!("gradient at layer {layer} has {} values", g.grad.len()));
            }
        }
        if self.trace.prompt_id != h.prompt_id || self.trace.model_id != h.model_id {
            return Err(TraceIoError::Header("trace ids differ from header".into()));
        }
        Ok(())
    }

    fn arrays(&self) -> impl Iterator<Item = (String, &[f64])> {
        let hidden = self.trace.hidden.iter().enumerate().map(|(l, v)| (format!("h^{l}"), v.as_slice()));
        let logits = std::iter::once(("logits".to_owned(), self.trace.logits.as_slice()));
        let grads = self.gradients.iter().map(|g| (format!("gradient {}", g.layer), g.grad.as_slice()));
        hidden.chain(logits).chain(grads)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn encode_trace(bundle: &TraceBundle) -> Result<Vec<u8>, TraceIoError> {
    bundle.validate()?;
    let precision = bundle.header.precision;
    let mut payload = Vec::new();
    for (name, values) in bundle.arrays() {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TraceIoError::NonFinite(name));
        }
        payload.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &v in values {
            match precision {
                Precision::F64 => payload.extend_from_slice(&v.to_le_bytes()),
                Precision::F32 => {
                    let narrow = v as f32;
                    if !narrow.is_finite() {
                        return Err(TraceIoError::NonFinite(format!("{name} (f32 overflow)")));
                    }
                    payload.extend_from_slice(&narrow.to_le_bytes());
                }
            }
        }
    }
    let header = serde_json::to_vec(&bundle.header).map_err(|e| TraceIoError::Header(e.to_string()))?;
    let header_len = u32::try_from(header.len()).map_err(|_| TraceIoError::Header("header too large".into()))?;

    let mut out = Vec::with_capacity(4 + 4 + 4 + header.len() + 8 + payload.len() + 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&fnv1a64(&payload).to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], TraceIoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            TraceIoError::Checksum(format!("file truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, TraceIoError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, TraceIoError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses and validates a trace. Truncation anywhere is reported as a
/// checksum failure.
pub fn decode_trace(bytes: &[u8]) -> Result<TraceBundle, TraceIoError> {
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(TraceIoError::BadMagic(bytes[..4].try_into().expect("4 bytes")));
    }
    let mut cur = Cursor { bytes, pos: 0 };
    cur.take(4, "magic")?;
    let version = cur.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(TraceIoError::UnsupportedVersion(version));
    }
    let header_len = cur.u32("header length")? as usize;
    let header_bytes = cur.take(header_len, "header")?;
    let payload_len = cur.u64("payload length")?;
    let payload_len = usize::try_from(payload_len)
        .map_err(|_| TraceIoError::Checksum(format!("payload length {payload_len} exceeds address space")))?;
    let payload = cur.take(payload_len, "payload")?;
    let stored = cur.u64("checksum")?;
    let computed = fnv1a64(payload);
    if stored != computed {
        return Err(TraceIoError::Checksum(format!(
            "stored {stored:016x}, computed {computed:016x}"
        )));
    }
    if cur.pos != bytes.len() {
        return Err(TraceIoError::Checksum(format!("{} trailing bytes after checksum", bytes.len() - cur.pos)));
    }
    let header: TraceHeader =
        serde_json::from_slice(header_bytes).map_err(|e| TraceIoError::Header(e.to_string()))?;

    let width = match header.precision {
        Precision::F64 => 8,
        Precision::F32 => 4,
    };
    let mut body = Cursor { bytes: payload, pos: 0 };
    let mut read_array = |name: String, expected: usize| -> Result<Vec<f64>, TraceIoError> {
        let len = body.u64(&name)? as usize;
        if len != expected {
            return Err(TraceIoError::Dimension(format!("{name} has {len} values, header implies {expected}")));
        }
        let raw = body
            .take(len.checked_mul(width).ok_or_else(|| TraceIoError::Dimension(name.clone()))?, &name)
            .map_err(|_| TraceIoError::Dimension(format!("payload ends inside {name}")))?;
        let values: Vec<f64> = match header.precision {
            Precision::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect(),
            Precision::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4")) as f64)
                .collect(),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TraceIoError::NonFinite(name));
        }
        Ok(values)
    };
    let mut hidden = Vec::with_capacity(header.num_layers + 1);
    for l in 0..=header.num_layers {
        hidden.push(read_array(format!("h^{l}"), header.hidden_dim)?);
    }
    let logits = read_array("logits".into(), header.vocab_size)?;
    let mut gradients = Vec::with_capacity(header.gradient_layers.len());
    for &layer in &header.gradient_layers {
        let target = header
            .gradient_target
            .ok_or_else(|| TraceIoError::Header("gradient_layers without gradient_target".into()))?;
        let grad = read_array(format!("gradient {layer}"), header.hidden_dim)?;
        gradients.push(GradientVector::new(layer, target, grad));
    }
    if body.pos != payload.len() {
        return Err(TraceIoError::Dimension(format!(
            "{} payload bytes left after the declared arrays",
            payload.len() - body.pos
        )));
    }
    let trace = LayerTrace::from_parts(header.prompt_id.clone(), header.model_id.clone(), hidden, logits);
    let bundle = TraceBundle {
        header,
        trace,
        gradients,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn write_trace(bundle: &TraceBundle, path: impl AsRef<Path>) -> Result<(), TraceIoError> {
    let bytes = encode_trace(bundle)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceBundle, TraceIoError> {
    decode_trace(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
