//! WHT1: `"WHT1" | version u32 = 1 | dim u32 | eps_rel f64 | fitted_on u64 |
//! mu f64[D] | eigenvalues f64[D] | rotation f64[D*D] row-major`, then the
//! optional provenance trailer.

use std::path::Path;

use isodr_core::whitening::WhiteningTransform;

use super::{narrow_u32, write_file, DecodeResult, Reader, Writer};
use crate::error::Result;
use crate::provenance::{Provenance, ReadLog};

const MAGIC: &[u8; 4] = b"WHT1";
const VERSION: u32 = 1;

pub fn encode_whitening(t: &WhiteningTransform, prov: Option<&Provenance>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(narrow_u32(t.dim(), "dim")?);
    w.f64s(&[t.eps_rel()]);
    w.u64(t.fitted_on() as u64);
    w.f64s(t.mu());
    w.f64s(t.eigenvalues());
    w.f64s(t.rotation());
    w.trailer(prov);
    Ok(w.buf)
}

pub fn decode_whitening(bytes: &[u8]) -> DecodeResult<(WhiteningTransform, Option<Provenance>)> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let dim = r.usize_u32("dim")?;
    let eps_rel = r.f64("eps_rel")?;
    let fitted_on = r.usize_u64("fitted_on")?;
    let mu = r.f64s(dim, "mu")?;
    let eigenvalues = r.f64s(dim, "eigenvalues")?;
    let rotation = r.f64s(dim.saturating_mul(dim), "rotation")?;
    let prov = r.trailer()?;
    Ok((WhiteningTransform::from_parts(mu, rotation, eigenvalues, eps_rel, fitted_on)?, prov))
}

pub fn save_whitening(t: &WhiteningTransform, prov: Option<&Provenance>, path: &Path) -> Result<()> {
    write_file(path, &encode_whitening(t, prov)?)
}

pub fn load_whitening(path: &Path, log: &mut ReadLog) -> Result<(WhiteningTransform, Option<Provenance>)> {
    let bytes = log.read(path)?;
    decode_whitening(&bytes).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::DecodeError;
    use crate::provenance::InputRecord;
    use isodr_core::whitening::fit_whitening;
    use isodr_core::EmbeddingMatrix;

    fn fitted() -> WhiteningTransform {
        let w = EmbeddingMatrix::new(3, (0..30).map(|i| ((i * 7919) % 13) as f64 * 0.3 - i as f64 * 0.01).collect())
            .unwrap();
        fit_whitening(&w, 1e-8).unwrap()
    }

    #[test]
    fn round_trip_with_and_without_provenance() {
        let t = fitted();
        let (back, prov) = decode_whitening(&encode_whitening(&t, None).unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(prov.is_none());
        let p = Provenance {
            command: "fit-whiten".into(),
            config_sha256: "ab".into(),
            seed: 9,
            inputs: vec![InputRecord { path: "src.emb".into(), sha256: "cd".into() }],
        };
        let bytes = encode_whitening(&t, Some(&p)).unwrap();
        let (back, prov) = decode_whitening(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(prov, Some(p));
        assert!(decode_whitening(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn rejects_garbage_after_payload() {
        let mut bytes = encode_whitening(&fitted(), None).unwrap();
        bytes.extend_from_slice(b"JUNK");
        assert!(matches!(decode_whitening(&bytes), Err(DecodeError::Malformed(_))));
    }
}
