//! Binary checkpoint format.
//!
//! All integers and floats are little-endian:
//!
//! | field            | type          |
//! |------------------|---------------|
//! | magic            | `b"LEOHOCKP"` |
//! | version          | u32 (= 1)     |
//! | obs_dim          | u32           |
//! | J                | u32           |
//! | K                | u32           |
//! | hidden layers    | u32           |
//! | each width       | u32           |
//! | parameter count  | u64           |
//! | parameters       | f64 × count   |

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use super::net::PolicyParameters;
use crate::env::ScenarioConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LEOHOCKP";
const VERSION: u32 = 1;

pub fn encode(params: &PolicyParameters) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        params.obs_dim() as u32,
        params.num_ues() as u32,
        params.num_planes() as u32,
        params.hidden().len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &h in params.hidden() {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params.as_slice() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn read_u32(c: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0; 4];
    c.read_exact(&mut b).map_err(|_| Error::Checkpoint("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn decode(bytes: &[u8]) -> Result<PolicyParameters> {
    let mut c = Cursor::new(bytes);
    let mut magic = [0; 8];
    c.read_exact(&mut magic).map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = read_u32(&mut c)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let obs_dim = read_u32(&mut c)? as usize;
    let j = read_u32(&mut c)? as usize;
    let k = read_u32(&mut c)? as usize;
    let layers = read_u32(&mut c)? as usize;
    if layers > 64 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let hidden = (0..layers)
        .map(|_| read_u32(&mut c).map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut b = [0; 8];
    c.read_exact(&mut b).map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let count = u64::from_le_bytes(b) as usize;
    let rest = &bytes[c.position() as usize..];
    if rest.len() != count.saturating_mul(8) {
        return Err(Error::Checkpoint(format!(
            "header announces {count} parameters but {} bytes follow",
            rest.len()
        )));
    }
    let params = rest
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    PolicyParameters::from_flat(obs_dim, j, k, &hidden, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(params: &PolicyParameters, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParameters> {
    decode(&fs::read(path)?)
}

/// Loads a checkpoint and checks it fits the scenario's J, K and observation length.
pub fn load_checkpoint_for(path: &Path, scenario: &ScenarioConfig) -> Result<PolicyParameters> {
    let params = load_checkpoint(path)?;
    let want = (scenario.obs_len(), scenario.num_ues, scenario.num_planes);
    let have = (params.obs_dim(), params.num_ues(), params.num_planes());
    if want != have {
        return Err(Error::Checkpoint(format!(
            "checkpoint has (obs_dim, J, K) = {have:?}, scenario needs {want:?}"
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = PolicyParameters::init(41, 10, 3, &[16, 8], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        let obs = vec![0.25; 41];
        assert_eq!(back.forward(&obs).unwrap(), net.forward(&obs).unwrap());
        assert!(load_checkpoint_for(&path, &ScenarioConfig::default()).is_ok());
    }

    #[test]
    fn scenario_mismatch_is_rejected() {
        let net = PolicyParameters::zeros(41, 10, 3, &[4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let mut cfg = ScenarioConfig::default();
        cfg.num_ues = 5;
        cfg.rb_total = vec![5, 5];
        cfg.preambles = 25;
        assert!(matches!(load_checkpoint_for(&path, &cfg), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = PolicyParameters::zeros(5, 2, 3, &[4]).unwrap();
        let mut bytes = encode(&net);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(decode(b"NOTACKPT").is_err());
    }
}
