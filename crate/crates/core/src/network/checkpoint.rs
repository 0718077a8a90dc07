//! Binary checkpoint format.
//!
//! ```text
//! SSFA-CKPT v1\n
//! layers <d0> <d1> ... <dL>\n
//! classes <C>\n
//! <payload>
//! ```
//!
//! The payload is a sequence of little-endian IEEE-754 `f64` values: for
//! each layer in order, its `d(i+1) × d(i)` weight matrix row-major followed
//! by its `d(i+1)` bias vector; then the `C × dL` classifier matrix
//! row-major. Nothing follows the payload.

use std::fs;
use std::path::Path;

use super::{ClassifierWeights, LayerSpec, Model, NetworkParams, Params};
use crate::error::{Error, Result};

const MAGIC: &str = "SSFA-CKPT v1";

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let spec = model.net.spec();
    let sizes: Vec<String> = spec.sizes().iter().map(usize::to_string).collect();
    let mut out = format!(
        "{MAGIC}\nlayers {}\nclasses {}\n",
        sizes.join(" "),
        model.classifier.num_classes()
    )
    .into_bytes();
    out.reserve(model.num_params() * 8);
    for v in model.buffers().into_iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("checkpoint header truncated".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))
}

fn parse_counts(line: &str, key: &str) -> Result<Vec<usize>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::Format(format!("expected `{key}` line, got `{line}`")));
    }
    parts
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Format(format!("bad number `{p}` in `{key}` line")))
        })
        .collect()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut pos = 0;
    if take_line(bytes, &mut pos)? != MAGIC {
        return Err(Error::Format(format!("missing `{MAGIC}` header")));
    }
    let spec = LayerSpec::new(parse_counts(take_line(bytes, &mut pos)?, "layers")?)?;
    let classes = match parse_counts(take_line(bytes, &mut pos)?, "classes")?[..] {
        [c] if c > 0 => c,
        _ => return Err(Error::Format("`classes` needs one positive count".into())),
    };
    let mut model = Model {
        net: NetworkParams::zeros(&spec),
        classifier: ClassifierWeights::zeros(classes, spec.output_dim()),
    };
    let payload = &bytes[pos..];
    let expected = model.num_params() * 8;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "checkpoint payload is {} bytes, spec needs {expected}",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for buf in model.buffers_mut() {
        for v in buf.iter_mut() {
            *v = values.next().unwrap();
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_header_then_le_floats() {
        let spec = LayerSpec::one_hidden(2, 1, 1);
        let mut model = Model::init(&spec, 2, 0);
        let values = [1.5, -2.0, 0.25, 3.0, -0.5, 7.0, 8.0];
        for (slot, v) in model.buffers_mut().into_iter().flatten().zip(values) {
            *slot = v;
        }
        let bytes = encode_checkpoint(&model);
        let header = b"SSFA-CKPT v1\nlayers 2 1 1\nclasses 2\n";
        assert!(bytes.starts_with(header));
        let payload = &bytes[header.len()..];
        assert_eq!(payload.len(), 7 * 8);
        assert_eq!(&payload[..8], &1.5f64.to_le_bytes());
        assert_eq!(&payload[48..], &8.0f64.to_le_bytes());
    }

    #[test]
    fn bit_exact_round_trip() {
        let spec = LayerSpec::new(vec![7, 5, 3, 4]).unwrap();
        let mut model = Model::init(&spec, 3, 42);
        model.net.layers_mut()[1].bias[2] = f64::MIN_POSITIVE / 3.0;
        let back = decode_checkpoint(&encode_checkpoint(&model)).unwrap();
        let bits = |m: &Model| m.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&model));
        assert_eq!(back.net.spec(), spec);
    }

    #[test]
    fn rejects_corruption() {
        let model = Model::init(&LayerSpec::one_hidden(3, 2, 2), 2, 1);
        let bytes = encode_checkpoint(&model);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_checkpoint(b"SSFA-CKPT v2\n").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
