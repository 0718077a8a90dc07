//! Portable graymap (PGM) reading and writing.
//!
//! Reads binary `P5` and ASCII `P2` files with any maxval up to 65535
//! (16-bit samples are big-endian, as Netpbm requires). Writes `P5` with
//! maxval 255.

use std::fs;
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn save_pgm(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(frame)).map_err(|e| Error::io(path, e))
}

/// Encodes as binary P5, maxval 255, each pixel clamped to [0,1] and
/// quantized by `round(p * 255)`.
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(
        frame
            .pixels()
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

struct Header {
    ascii: bool,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

/// Whitespace-separated header tokenizer that skips `#` comments.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next_token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn next_number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .next_token()
            .ok_or_else(|| Error::Format(format!("PGM header ends before {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::Format(format!(
                    "PGM {what} is not a number: `{}`",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut tokens = Tokens { bytes, pos: 0 };
    let magic = tokens
        .next_token()
        .ok_or_else(|| Error::Format("empty PGM file".into()))?;
    let ascii = match magic {
        b"P5" => false,
        b"P2" => true,
        other => {
            return Err(Error::Format(format!(
                "unsupported magic `{}` (expected P5 or P2)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = tokens.next_number("width")? as usize;
    let height = tokens.next_number("height")? as usize;
    let maxval = tokens.next_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("PGM has zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from binary data
    let data_start = tokens.pos + 1;
    Ok(Header {
        ascii,
        width,
        height,
        maxval,
        data_start,
    })
}

fn truncated(expected: usize, got: usize) -> Error {
    Error::Io {
        path: "<pgm payload>".into(),
        source: std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("PGM payload truncated: expected {expected} samples, got {got}"),
        ),
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    let header = parse_header(bytes)?;
    let n = header.width * header.height;
    let scale = f64::from(header.maxval);
    let mut samples = Vec::with_capacity(n);
    if header.ascii {
        let mut tokens = Tokens {
            bytes,
            pos: header.data_start.min(bytes.len()),
        };
        for i in 0..n {
            if tokens.pos >= bytes.len() {
                return Err(truncated(n, i));
            }
            let v = match tokens.next_number("sample") {
                Ok(v) => v,
                Err(_) if tokens.pos >= bytes.len() => return Err(truncated(n, i)),
                Err(e) => return Err(e),
            };
            if v > header.maxval {
                return Err(Error::Format(format!(
                    "sample {v} exceeds maxval {}",
                    header.maxval
                )));
            }
            samples.push(f64::from(v) / scale);
        }
    } else {
        let payload = bytes.get(header.data_start..).unwrap_or(&[]);
        let width = if header.maxval < 256 { 1 } else { 2 };
        if payload.len() < n * width {
            return Err(truncated(n, payload.len() / width));
        }
        for chunk in payload.chunks_exact(width).take(n) {
            let v = if width == 1 {
                u32::from(chunk[0])
            } else {
                u32::from(u16::from_be_bytes([chunk[0], chunk[1]]))
            };
            samples.push(f64::from(v.min(header.maxval)) / scale);
        }
    }
    Frame::new(header.width, header.height, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_binary_2x2() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        let f = decode_pgm(&bytes).unwrap();
        assert_eq!(f.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn decodes_ascii_with_comments() {
        let f = decode_pgm(b"P2\n# made by hand\n3 1\n# max\n4\n0 2\n4\n").unwrap();
        assert_eq!(f.width(), 3);
        assert_eq!(f.pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn decodes_sixteen_bit() {
        let mut bytes = b"P5 1 2 65535\n".to_vec();
        bytes.extend([0xFF, 0xFF, 0x00, 0x00]);
        assert_eq!(decode_pgm(&bytes).unwrap().pixels(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_p7() {
        assert!(matches!(decode_pgm(b"P7\n2 2\n255\n"), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_malformed_header() {
        assert!(matches!(decode_pgm(b"P5\n2 x\n255\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n2 2\n70000\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n2"), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([1u8, 2, 3]);
        assert!(matches!(decode_pgm(&bytes), Err(Error::Io { .. })));
        assert!(matches!(decode_pgm(b"P2\n2 2\n255\n1 2 3"), Err(Error::Io { .. })));
    }

    #[test]
    fn saturation_payloads() {
        let zeros = encode_pgm(&Frame::filled(3, 2, 0.0).unwrap());
        assert!(zeros.ends_with(&[0u8; 6]));
        assert_eq!(zeros.len(), b"P5\n3 2\n255\n".len() + 6);
        let ones = encode_pgm(&Frame::filled(3, 2, 1.0).unwrap());
        assert!(ones.ends_with(&[0xFFu8; 6]));
        let clamped = encode_pgm(&Frame::new(2, 1, vec![-3.0, 7.0]).unwrap());
        assert!(clamped.ends_with(&[0x00, 0xFF]));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let f = Frame::new(2, 1, vec![0.25, 0.75]).unwrap();
        save_pgm(&f, &path).unwrap();
        let g = load_pgm(&path).unwrap();
        for (a, b) in f.pixels().iter().zip(g.pixels()) {
            assert!((a - b).abs() <= 1.0 / 510.0);
        }
        assert!(matches!(
            load_pgm(dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_within_quantization(
            (w, h, px) in (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(0.0f64..=1.0, w * h))
            })
        ) {
            let f = Frame::new(w, h, px).unwrap();
            let g = decode_pgm(&encode_pgm(&f)).unwrap();
            prop_assert_eq!((g.width(), g.height()), (w, h));
            for (a, b) in f.pixels().iter().zip(g.pixels()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
            }
        }
    }
}
