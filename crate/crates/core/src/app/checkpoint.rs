//! Binary agent checkpoints.
//!
//! Layout, all integers `u64` and reals `f64`, little-endian:
//! `"SKYM"`, format version (`u32`), `D_s`, `D_a`, hidden layer count, each
//! hidden width, `alpha`, then the parameters of actor, critic1, critic2,
//! target1 and target2 in that order (per layer: weights row-major
//! `in x out`, then biases).

use std::path::Path;

use crate::error::{Result, SkyError};
use crate::learner::dense::{Activation, DenseNet};
use crate::learner::sac::NetworkBundle;

pub const MAGIC: &[u8; 4] = b"SKYM";
pub const VERSION: u32 = 1;

pub fn encode(bundle: &NetworkBundle) -> Vec<u8> {
    let hidden = bundle.hidden();
    let nets = [&bundle.actor, &bundle.critic1, &bundle.critic2, &bundle.target1, &bundle.target2];
    let params: usize = nets.iter().map(|n| n.param_count()).sum();
    let mut out = Vec::with_capacity(4 + 4 + 8 * (4 + hidden.len() + params));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [bundle.state_dim, bundle.action_dim, hidden.len()].into_iter().chain(hidden.iter().copied()) {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&bundle.alpha().to_le_bytes());
    for net in nets {
        for slice in net.param_slices() {
            for v in slice {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            SkyError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v > 0 && v < 1 << 24)
            .ok_or_else(|| SkyError::Checkpoint(format!("implausible {what} {v}")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<NetworkBundle> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(SkyError::Checkpoint("missing SKYM magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(SkyError::Checkpoint(format!("unsupported format version {version}, expected {VERSION}")));
    }
    let ds = r.usize("state dimension")?;
    let da = r.usize("action dimension")?;
    let layers = r.u64()? as usize;
    if layers > 64 {
        return Err(SkyError::Checkpoint(format!("implausible hidden layer count {layers}")));
    }
    let hidden = (0..layers).map(|_| r.usize("hidden width")).collect::<Result<Vec<_>>>()?;
    let alpha = r.f64()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(SkyError::Checkpoint(format!("temperature {alpha} is not positive and finite")));
    }
    let sizes = |input: usize, output: usize| {
        std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect::<Vec<_>>()
    };
    let mut read_net = |input: usize, output: usize| -> Result<DenseNet> {
        let mut net = DenseNet::zeros(&sizes(input, output), Activation::Identity);
        let flat = (0..net.param_count()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        net.set_params_flat(&flat)?;
        Ok(net)
    };
    let actor = read_net(ds, 2 * da)?;
    let critics = (0..4).map(|_| read_net(ds + da, 1)).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(SkyError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let [c1, c2, t1, t2]: [DenseNet; 4] = critics.try_into().expect("four critics");
    Ok(NetworkBundle::from_parts(actor, c1, c2, t1, t2, alpha.ln()))
}

pub fn save(bundle: &NetworkBundle, path: &Path) -> Result<()> {
    std::fs::write(path, encode(bundle)).map_err(|e| SkyError::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkBundle> {
    let bytes = std::fs::read(path).map_err(|e| SkyError::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        SkyError::Checkpoint(msg) => SkyError::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> NetworkBundle {
        let mut b = NetworkBundle::new(5, 3, &[7, 4], &mut ChaCha8Rng::seed_from_u64(3));
        b.log_alpha = -0.7;
        b
    }

    #[test]
    fn round_trip_is_bit_exact_on_actor_probe() {
        let b = bundle();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("agent.skym");
        save(&b, &p).unwrap();
        let back = load(&p).unwrap();
        let probe = [0.3, -1.2, 0.0, 2.5, 1e-3];
        let a = b.actor.forward(&probe).unwrap();
        let c = back.actor.forward(&probe).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            c.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.critic1, b.critic1);
        assert_eq!(back.target2, b.target2);
        assert_eq!(back.hidden(), vec![7, 4]);
        assert!((back.log_alpha + 0.7).abs() < 1e-15);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&bundle());
        assert_eq!(&bytes[..4], b"SKYM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), (-0.7f64).exp());
        let b = bundle();
        assert_eq!(f64::from_le_bytes(bytes[56..64].try_into().unwrap()), b.actor.params_flat()[0]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&bundle());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(decode(&ver).is_err());
    }
}
