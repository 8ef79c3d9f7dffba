//! Binary parameter checkpoint.
//!
//! Layout: the 8-byte magic `SSPEVIT1`, a little-endian `u32` byte length
//! followed by the model config as UTF-8 JSON, then every trainable matrix
//! in declaration order as little-endian `f64` values. Shapes are implied by
//! the config.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;

use super::params::{EncoderParams, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSPEVIT1";

pub fn write_checkpoint<W: Write>(params: &EncoderParams, mut w: W) -> std::io::Result<()> {
    let config = serde_json::to_vec(&params.config).expect("config serialises");
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    for m in params.matrices() {
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<EncoderParams> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let rest = bytes
        .strip_prefix(CHECKPOINT_MAGIC.as_slice())
        .ok_or_else(|| Error::Checkpoint("missing SSPEVIT1 magic".into()))?;
    if rest.len() < 4 {
        return Err(Error::Checkpoint("truncated config length".into()));
    }
    let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
    let rest = &rest[4..];
    if rest.len() < len {
        return Err(Error::Checkpoint("truncated config record".into()));
    }
    let config: ModelConfig =
        serde_json::from_slice(&rest[..len]).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    // Fixed tables are rebuilt from the config; everything else is overwritten below.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut params = EncoderParams::init(config, &mut rng)?;
    let mut payload = rest[len..].chunks_exact(8);
    for m in params.matrices_mut() {
        for v in m.data_mut() {
            let chunk = payload
                .next()
                .ok_or_else(|| Error::Checkpoint("truncated matrix payload".into()))?;
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if payload.next().is_some() || !payload.remainder().is_empty() {
        return Err(Error::Checkpoint("trailing bytes after last matrix".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::PeKind;

    fn params(kind: PeKind) -> EncoderParams {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        EncoderParams::init(ModelConfig { pe_kind: kind, ..Default::default() }, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [PeKind::None, PeKind::Sinusoidal1d, PeKind::Grid2d, PeKind::Relative] {
            let p = params(kind);
            let mut buf = Vec::new();
            write_checkpoint(&p, &mut buf).unwrap();
            assert_eq!(&buf[..8], b"SSPEVIT1");
            let back = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(back, p);
            let mut again = Vec::new();
            write_checkpoint(&back, &mut again).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&params(PeKind::Sinusoidal1d), &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 8]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_checkpoint(bad_magic.as_slice()).is_err());
    }
}
