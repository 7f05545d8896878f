//! Binary parameter checkpoints.
//!
//! Little-endian layout: 4-byte magic, u32 header words, then the parameters
//! as f32 in declaration order.
//!
//! * `VAEP`: width, height, encoder depth, encoder widths, latent dim,
//!   decoder depth, decoder widths.
//! * `DISC`: width, height, hidden depth, hidden widths.

use std::path::Path;

use super::discriminator::{DiscriminatorArch, DiscriminatorParams};
use super::vae::{VaeArch, VaeParams};
use crate::error::{Error, Result};
use crate::io;

pub const VAE_MAGIC: &[u8; 4] = b"VAEP";
pub const DISCRIMINATOR_MAGIC: &[u8; 4] = b"DISC";

pub fn encode_vae(params: &VaeParams) -> Vec<u8> {
    let a = params.arch();
    let mut words = vec![a.width, a.height, a.encoder_hidden.len()];
    words.extend(&a.encoder_hidden);
    words.push(a.latent_dim);
    words.push(a.decoder_hidden.len());
    words.extend(&a.decoder_hidden);
    encode(VAE_MAGIC, &words, params.values())
}

pub fn decode_vae(bytes: &[u8], origin: &Path) -> Result<VaeParams> {
    let mut r = Reader::new(bytes, origin, VAE_MAGIC)?;
    let width = r.word()?;
    let height = r.word()?;
    let encoder_hidden = r.list()?;
    let latent_dim = r.word()?;
    let decoder_hidden = r.list()?;
    let arch = VaeArch::new(width, height, encoder_hidden, latent_dim, decoder_hidden)
        .map_err(|e| Error::format(origin, e.to_string()))?;
    let len: usize = arch.layer_shapes().iter().map(|s| s.param_len()).sum();
    let values = r.params(len)?;
    VaeParams::from_values(arch, values).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn encode_discriminator(params: &DiscriminatorParams) -> Vec<u8> {
    let a = params.arch();
    let mut words = vec![a.width, a.height, a.hidden.len()];
    words.extend(&a.hidden);
    encode(DISCRIMINATOR_MAGIC, &words, params.values())
}

pub fn decode_discriminator(bytes: &[u8], origin: &Path) -> Result<DiscriminatorParams> {
    let mut r = Reader::new(bytes, origin, DISCRIMINATOR_MAGIC)?;
    let width = r.word()?;
    let height = r.word()?;
    let hidden = r.list()?;
    let arch = DiscriminatorArch {
        width,
        height,
        hidden,
    };
    arch.validate().map_err(|e| Error::format(origin, e.to_string()))?;
    let len: usize = arch.layer_shapes().iter().map(|s| s.param_len()).sum();
    let values = r.params(len)?;
    DiscriminatorParams::from_values(arch, values).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_vae(path: impl AsRef<Path>, params: &VaeParams) -> Result<()> {
    io::write_atomic(path.as_ref(), &encode_vae(params))
}

pub fn read_vae(path: impl AsRef<Path>) -> Result<VaeParams> {
    let path = path.as_ref();
    decode_vae(&io::read(path)?, path)
}

pub fn write_discriminator(path: impl AsRef<Path>, params: &DiscriminatorParams) -> Result<()> {
    io::write_atomic(path.as_ref(), &encode_discriminator(params))
}

pub fn read_discriminator(path: impl AsRef<Path>) -> Result<DiscriminatorParams> {
    let path = path.as_ref();
    decode_discriminator(&io::read(path)?, path)
}

fn encode(magic: &[u8; 4], words: &[usize], values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * (words.len() + values.len()));
    out.extend_from_slice(magic);
    for &w in words {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], origin: &'a Path, magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::format(
                origin,
                format!("missing {} magic", String::from_utf8_lossy(magic)),
            ));
        }
        Ok(Self {
            bytes,
            at: 4,
            origin,
        })
    }

    fn take4(&mut self) -> Result<[u8; 4]> {
        let chunk = self
            .bytes
            .get(self.at..self.at + 4)
            .ok_or_else(|| Error::format(self.origin, "truncated checkpoint"))?;
        self.at += 4;
        Ok(chunk.try_into().unwrap())
    }

    fn word(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take4()?) as usize)
    }

    fn list(&mut self) -> Result<Vec<usize>> {
        let n = self.word()?;
        if n > 64 {
            return Err(Error::format(self.origin, format!("implausible layer count {n}")));
        }
        (0..n).map(|_| self.word()).collect()
    }

    fn params(&mut self, len: usize) -> Result<Vec<f64>> {
        let remaining = self.bytes.len() - self.at;
        if remaining != 4 * len {
            return Err(Error::format(
                self.origin,
                format!("expected {len} parameters, found {} bytes", remaining),
            ));
        }
        (0..len)
            .map(|_| Ok(f32::from_le_bytes(self.take4()?) as f64))
            .collect()
    }
}
