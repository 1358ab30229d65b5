//! Flat binary checkpoint for [`NetworkParams`].
//!
//! Layout, all little-endian:
//!
//! ```text
//! "EPNP" | version: u32 | layer count: u32 | widths: u32 * count
//! conductance blocks, row-major f64, layer 0 first
//! bias vectors, f64, layer 1 first
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::netcore::{LayerSpec, NetworkParams};

pub const MAGIC: &[u8; 4] = b"EPNP";
pub const VERSION: u32 = 1;

pub fn encode(params: &NetworkParams) -> Vec<u8> {
    let sizes = params.spec().sizes();
    let mut out = Vec::with_capacity(12 + 4 * sizes.len() + 8 * params.spec().num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &w in sizes {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for g in params.iter() {
        out.extend_from_slice(&g.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(Error::Truncated {
                what,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n * 8, "checkpoint payload")?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<NetworkParams> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "checkpoint header")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:02x?}")));
    }
    let version = r.u32("checkpoint header")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32("checkpoint header")? as usize;
    // a width needs 4 bytes, so a count larger than the buffer is truncated
    if count > bytes.len() / 4 {
        return Err(Error::Truncated {
            what: "checkpoint widths",
            needed: count.saturating_mul(4),
            available: bytes.len() - r.pos,
        });
    }
    let mut sizes = Vec::with_capacity(count);
    for _ in 0..count {
        sizes.push(r.u32("checkpoint widths")? as usize);
    }
    let spec = LayerSpec::new(sizes).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let payload = spec
        .sizes()
        .windows(2)
        .try_fold(0usize, |acc, w| acc.checked_add(w[0].checked_mul(w[1])?))
        .and_then(|acc| acc.checked_add(spec.sizes()[1..].iter().sum()))
        .and_then(|n| n.checked_mul(8));
    let remaining = bytes.len() - r.pos;
    match payload {
        Some(n) if n == remaining => {}
        Some(n) if n > remaining => {
            return Err(Error::Truncated {
                what: "checkpoint payload",
                needed: n,
                available: remaining,
            })
        }
        Some(n) => {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after payload",
                remaining - n
            )))
        }
        None => return Err(Error::Checkpoint("layer widths overflow".into())),
    }

    let sizes = spec.sizes().to_vec();
    let mut weights = Vec::with_capacity(sizes.len() - 1);
    for w in sizes.windows(2) {
        let data = r.f64s(w[0] * w[1])?;
        weights.push(Array2::from_shape_vec((w[0], w[1]), data).expect("length checked"));
    }
    let mut biases = Vec::with_capacity(sizes.len() - 1);
    for &n in &sizes[1..] {
        biases.push(Array1::from(r.f64s(n)?));
    }
    NetworkParams::from_parts(spec, weights, biases)
}

pub fn save(params: &NetworkParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{init_params, InitScheme};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let spec = LayerSpec::new(vec![4, 3, 2]).unwrap();
        let p = init_params(&spec, 1, InitScheme::default()).unwrap();
        let bytes = encode(&p);
        assert_eq!(&bytes[..4], b"EPNP");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[4, 0, 0, 0]);
        assert_eq!(bytes.len(), 12 + 12 + 8 * spec.num_params());
        // first payload value is g[0][0,0], then g[0][0,1] (row-major)
        let first = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let second = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        assert_eq!(first, p.weights(0)[(0, 0)]);
        assert_eq!(second, p.weights(0)[(0, 1)]);
    }

    #[test]
    fn rejects_malformed_input() {
        let spec = LayerSpec::new(vec![4, 3, 2]).unwrap();
        let bytes = encode(&init_params(&spec, 1, InitScheme::default()).unwrap());
        assert!(matches!(decode(b"EPN"), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(_))));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Checkpoint(_))));
        let mut huge = bytes[..12].to_vec();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&huge).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(sizes in prop::collection::vec(1usize..6, 1..4), half in 1usize..4, seed: u64) {
            let mut all = vec![2 * half];
            all.extend(sizes);
            let spec = LayerSpec::new(all).unwrap();
            let p = init_params(&spec, seed, InitScheme::default()).unwrap();
            let q = decode(&encode(&p)).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}
