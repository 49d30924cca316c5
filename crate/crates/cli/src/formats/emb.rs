//! EMB1: `"EMB1" | version u32 = 1 | dim u32 | n_rows u64 | n_sequences u64 |
//! n_rows * dim f64 row-major | per sequence: id_len u16, id UTF-8,
//! kind u8 (0 query, 1 document), row_offset u64, token_count u32`.

use std::path::Path;

use isodr_core::{EmbeddingCorpus, EmbeddingMatrix, Error, SequenceKind, SequenceRecord};

use super::{malformed, narrow_u32, write_file, DecodeResult, Reader, Writer};
use crate::error::Result;
use crate::provenance::ReadLog;

const MAGIC: &[u8; 4] = b"EMB1";
const VERSION: u32 = 1;

pub fn encode_corpus(corpus: &EmbeddingCorpus) -> Result<Vec<u8>, Error> {
    let m = corpus.matrix();
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(narrow_u32(m.dim(), "dim")?);
    w.u64(m.n_rows() as u64);
    w.u64(corpus.sequences().len() as u64);
    w.f64s(m.values());
    for s in corpus.sequences() {
        let id_len = u16::try_from(s.id.len())
            .map_err(|_| Error::Value(format!("sequence id of {} bytes exceeds u16", s.id.len())))?;
        w.u16(id_len);
        w.bytes(s.id.as_bytes());
        w.u8(match s.kind {
            SequenceKind::Query => 0,
            SequenceKind::Document => 1,
        });
        w.u64(s.row_offset as u64);
        w.u32(narrow_u32(s.token_count, "token_count")?);
    }
    Ok(w.buf)
}

pub fn decode_corpus(bytes: &[u8]) -> DecodeResult<EmbeddingCorpus> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let dim = r.usize_u32("dim")?;
    let n_rows = r.usize_u64("n_rows")?;
    let n_seq = r.usize_u64("n_sequences")?;
    let count = n_rows.checked_mul(dim).ok_or_else(|| malformed("n_rows * dim overflows"))?;
    let values = r.f64s(count, "matrix payload")?;
    let matrix = EmbeddingMatrix::new(dim, values)?;
    // Each record takes at least 15 bytes; reject absurd counts before allocating.
    if n_seq > r.remaining() / 15 {
        return Err(malformed(format!("{n_seq} sequence records cannot fit in the remaining bytes")));
    }
    let mut sequences = Vec::with_capacity(n_seq);
    for i in 0..n_seq {
        let id_len = r.u16("id length")? as usize;
        let id = std::str::from_utf8(r.bytes(id_len, "id")?)
            .map_err(|_| malformed(format!("sequence {i} id is not valid UTF-8")))?
            .to_string();
        let kind = match r.u8("kind")? {
            0 => SequenceKind::Query,
            1 => SequenceKind::Document,
            k => return Err(malformed(format!("sequence {i} has unknown kind byte {k}"))),
        };
        let row_offset = r.usize_u64("row_offset")?;
        let token_count = r.usize_u32("token_count")?;
        sequences.push(SequenceRecord::new(id, kind, row_offset, token_count));
    }
    r.finish()?;
    Ok(EmbeddingCorpus::new(matrix, sequences)?)
}

pub fn save_corpus(corpus: &EmbeddingCorpus, path: &Path) -> Result<()> {
    let bytes = encode_corpus(corpus)?;
    write_file(path, &bytes)
}

pub fn load_corpus(path: &Path, log: &mut ReadLog) -> Result<EmbeddingCorpus> {
    let bytes = log.read(path)?;
    decode_corpus(&bytes).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::DecodeError;

    fn sample() -> EmbeddingCorpus {
        let m = EmbeddingMatrix::new(2, vec![1.0, -0.0, 2.5, f64::MIN_POSITIVE, 3.0, 1e300]).unwrap();
        EmbeddingCorpus::new(
            m,
            vec![
                SequenceRecord::new("q\u{e9}", SequenceKind::Query, 0, 1),
                SequenceRecord::new("d", SequenceKind::Document, 1, 2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = encode_corpus(&c).unwrap();
        let back = decode_corpus(&bytes).unwrap();
        assert_eq!(encode_corpus(&back).unwrap(), bytes);
        assert!(back.matrix().values().iter().zip(c.matrix().values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_corpus(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), 1.0);
    }

    #[test]
    fn empty_corpus() {
        let c = EmbeddingCorpus::new(EmbeddingMatrix::empty(4).unwrap(), vec![]).unwrap();
        let back = decode_corpus(&encode_corpus(&c).unwrap()).unwrap();
        assert_eq!(back.dim(), 4);
        assert_eq!(back.matrix().n_rows(), 0);
    }

    #[test]
    fn malformed_inputs() {
        let good = encode_corpus(&sample()).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_corpus(&bad_magic), Err(DecodeError::Malformed(_))));
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(decode_corpus(&bad_version), Err(DecodeError::Malformed(_))));
        assert!(matches!(decode_corpus(&good[..good.len() - 1]), Err(DecodeError::Malformed(_))));
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(decode_corpus(&trailing), Err(DecodeError::Malformed(_))));
        let mut nan = good;
        nan[28..36].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_corpus(&nan), Err(DecodeError::Core(Error::Value(_)))));
    }

    #[test]
    fn span_past_matrix_is_integrity_error() {
        // One sequence claiming 3 tokens over a 2-row matrix.
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(1);
        w.u64(2);
        w.u64(1);
        w.f64s(&[1.0, 2.0]);
        w.u16(1);
        w.bytes(b"q");
        w.u8(0);
        w.u64(0);
        w.u32(3);
        assert!(matches!(decode_corpus(&w.buf), Err(DecodeError::Core(Error::Integrity(_)))));
    }
}
