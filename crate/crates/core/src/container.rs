//! Versioned binary container shared by checkpoints and prepared datasets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic[4] | version u32 | header_len u64 | header (JSON) | payload_len u64 | payload | sha256[32]
//! ```
//!
//! The trailing digest covers every preceding byte.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn encode(magic: &[u8; 4], header: &impl Serialize, payload: &[u8]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(4 + 4 + 8 + header.len() + 8 + payload.len() + 32);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Verifies magic, version and checksum; returns the parsed header and payload.
pub fn decode<'a, H: DeserializeOwned>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(H, &'a [u8])> {
    if bytes.len() < 4 + 4 + 8 + 8 + 32 {
        return Err(Error::Format("file too short".into()));
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("checksum mismatch".into()));
    }
    let mut r = Reader::new(&body[4..]);
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let hlen = r.u64()? as usize;
    let header = serde_json::from_slice(r.take(hlen)?)?;
    let plen = r.u64()? as usize;
    let payload = r.take(plen)?;
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok((header, payload))
}

/// Bounds-checked little-endian cursor.
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_corruption() {
        let bytes = encode(b"TEST", &vec!["a".to_string()], &[1, 2, 3]).unwrap();
        let (h, p): (Vec<String>, _) = decode(&bytes, b"TEST").unwrap();
        assert_eq!(h, vec!["a"]);
        assert_eq!(p, &[1, 2, 3]);
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(decode::<Vec<String>>(&bad, b"TEST").is_err(), "byte {i}");
        }
        assert!(decode::<Vec<String>>(&bytes, b"OTHR").is_err());
    }
}
