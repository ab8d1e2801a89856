//! Flat binary parameter files.
//!
//! Layout: 8-byte magic, u32 LE format version, u32 LE header length, a JSON
//! header (`{"layout": ..., "meta": ...}`), then the raw little-endian f64
//! value array. `meta` is free-form JSON for callers (model architecture,
//! component names, ...).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{ParamLayout, ParamSegment, ParamVector};

const MAGIC: &[u8; 8] = b"NNPARMS\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    layout: ParamLayout,
    meta: serde_json::Value,
}

pub fn save_params(path: &Path, params: &ParamVector, meta: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(&Header { layout: params.layout().clone(), meta: meta.clone() })?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for v in params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<(ParamVector, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic in {}", path.display())));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported parameter file version {}", version)));
    }
    r.read_exact(&mut word)?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    header.layout.validate().map_err(|e| Error::Format(format!("bad layout: {}", e)))?;
    let n = header.layout.total_len();
    let mut values = vec![0.0f64; n];
    let mut buf = [0u8; 8];
    for v in &mut values {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in {}", rest.len(), path.display())));
    }
    Ok((ParamVector::new(values, header.layout)?, header.meta))
}

/// Concatenates several named parameter vectors into one, prefixing each
/// segment name with `<part>.` so they can be pulled back apart.
pub fn bundle(parts: &[(&str, &ParamVector)]) -> ParamVector {
    let mut values = Vec::new();
    let mut segments = Vec::new();
    let mut base = 0;
    for (name, pv) in parts {
        for s in &pv.layout().segments {
            segments.push(ParamSegment {
                name: format!("{}.{}", name, s.name),
                offset: base + s.offset,
                len: s.len,
                shape: s.shape.clone(),
            });
        }
        values.extend_from_slice(pv.values());
        base += pv.len();
    }
    ParamVector::new(values, ParamLayout { segments }).unwrap()
}

/// Extracts the part named `prefix` from a bundled vector.
pub fn unbundle(bundled: &ParamVector, prefix: &str) -> Result<ParamVector> {
    let want = format!("{}.", prefix);
    let mut values = Vec::new();
    let mut segments = Vec::new();
    let mut offset = 0;
    for s in &bundled.layout().segments {
        if let Some(rest) = s.name.strip_prefix(&want) {
            values.extend_from_slice(&bundled.values()[s.offset..s.offset + s.len]);
            segments.push(ParamSegment { name: rest.to_string(), offset, len: s.len, shape: s.shape.clone() });
            offset += s.len;
        }
    }
    if segments.is_empty() {
        return Err(Error::Format(format!("no segments with prefix {:?} in bundle", prefix)));
    }
    ParamVector::new(values, ParamLayout { segments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Mlp};
    use crate::rng::{stream, Stream};

    #[test]
    fn roundtrip_preserves_bits_and_meta() {
        let mut rng = stream(5, Stream::Init);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let meta = serde_json::json!({"kind": "mlp", "sizes": [3, 4, 2]});
        save_params(&path, net.params(), &meta).unwrap();
        let (loaded, meta2) = load_params(&path).unwrap();
        assert_eq!(loaded, *net.params());
        assert_eq!(meta2, meta);
    }

    #[test]
    fn file_starts_with_magic_and_version() {
        let mut rng = stream(5, Stream::Init);
        let net = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        save_params(&path, net.params(), &serde_json::Value::Null).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), VERSION);
        // last value is little-endian f64
        let n = net.params().len();
        let tail = &bytes[bytes.len() - 8..];
        assert_eq!(f64::from_le_bytes(tail.try_into().unwrap()), net.params().values()[n - 1]);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOTPARMS____").unwrap();
        assert!(matches!(load_params(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bundle_unbundle_roundtrip() {
        let mut rng = stream(9, Stream::Init);
        let a = Mlp::new(&[2, 3], Activation::Tanh, Activation::Identity, &mut rng);
        let b = Mlp::new(&[3, 1], Activation::Relu, Activation::Sigmoid, &mut rng);
        let packed = bundle(&[("enc", a.params()), ("dec", b.params())]);
        assert_eq!(packed.len(), a.params().len() + b.params().len());
        assert_eq!(&unbundle(&packed, "enc").unwrap(), a.params());
        assert_eq!(&unbundle(&packed, "dec").unwrap(), b.params());
        assert!(unbundle(&packed, "missing").is_err());
    }
}
