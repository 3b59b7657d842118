//! Binary index file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "FQIX" | version u16 | scalar bits u8 (32|64) | reserved u8
//! provider_id str | dims u32 | k u32 | chunk_size u32 | overlap u32
//! built_at i64 (unix millis) | passage count u64
//! passage records: passage_id str, doc_id str, ordinal u32, word_count u32, text str
//! vector payload: count * dims floats of the declared width
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{DateTime, Utc};

use super::{EmbeddingVector, IndexError, Passage, RetrievalConfig, VectorIndex};
use crate::scalar::Scalar;

pub const INDEX_MAGIC: [u8; 4] = *b"FQIX";
pub const INDEX_VERSION: u16 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, IndexError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| IndexError::Format(format!("invalid UTF-8: {e}")))
}

fn to_u32(v: usize, what: &str) -> Result<u32, IndexError> {
    u32::try_from(v).map_err(|_| IndexError::Format(format!("{what} {v} does not fit in u32")))
}

pub fn write_index<T: Scalar, W: Write>(index: &VectorIndex<T>, w: &mut W) -> Result<(), IndexError> {
    w.write_all(&INDEX_MAGIC)?;
    w.write_u16::<LittleEndian>(INDEX_VERSION)?;
    w.write_u8(T::BITS)?;
    w.write_u8(0)?;
    write_str(w, index.provider_id())?;
    let cfg = index.config();
    w.write_u32::<LittleEndian>(to_u32(index.dims(), "dims")?)?;
    w.write_u32::<LittleEndian>(to_u32(cfg.k, "k")?)?;
    w.write_u32::<LittleEndian>(to_u32(cfg.chunk_size_words, "chunk size")?)?;
    w.write_u32::<LittleEndian>(to_u32(cfg.overlap_words, "overlap")?)?;
    w.write_i64::<LittleEndian>(index.built_at().timestamp_millis())?;
    w.write_u64::<LittleEndian>(index.len() as u64)?;
    for p in index.passages() {
        write_str(w, &p.passage_id)?;
        write_str(w, &p.doc_id)?;
        w.write_u32::<LittleEndian>(p.ordinal)?;
        w.write_u32::<LittleEndian>(p.word_count)?;
        write_str(w, &p.text)?;
    }
    for v in index.vectors() {
        for x in v.values() {
            if T::BITS == 32 {
                w.write_f32::<LittleEndian>(x.to_f32().expect("f32 scalar"))?;
            } else {
                w.write_f64::<LittleEndian>(x.to_f64().expect("f64 scalar"))?;
            }
        }
    }
    Ok(())
}

/// Read an index written by [`write_index`]. Vectors stored at a different
/// width are converted.
pub fn read_index<T: Scalar, R: Read>(r: &mut R) -> Result<VectorIndex<T>, IndexError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != INDEX_MAGIC {
        return Err(IndexError::Format("not an index file (bad magic)".into()));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != INDEX_VERSION {
        return Err(IndexError::Format(format!("unsupported index version {version}")));
    }
    let bits = r.read_u8()?;
    if bits != 32 && bits != 64 {
        return Err(IndexError::Format(format!("unsupported scalar width {bits}")));
    }
    let _reserved = r.read_u8()?;
    let provider_id = read_str(r)?;
    let dims = r.read_u32::<LittleEndian>()? as usize;
    let config = RetrievalConfig {
        k: r.read_u32::<LittleEndian>()? as usize,
        chunk_size_words: r.read_u32::<LittleEndian>()? as usize,
        overlap_words: r.read_u32::<LittleEndian>()? as usize,
    };
    let millis = r.read_i64::<LittleEndian>()?;
    let built_at: DateTime<Utc> = DateTime::from_timestamp_millis(millis)
        .ok_or_else(|| IndexError::Format(format!("bad timestamp {millis}")))?;
    let count = r.read_u64::<LittleEndian>()? as usize;
    if dims == 0 {
        return Err(IndexError::Format("zero dimensions".into()));
    }
    let mut passages = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        passages.push(Passage {
            passage_id: read_str(r)?,
            doc_id: read_str(r)?,
            ordinal: r.read_u32::<LittleEndian>()?,
            word_count: r.read_u32::<LittleEndian>()?,
            text: read_str(r)?,
        });
    }
    let mut vectors = Vec::with_capacity(passages.len());
    for _ in 0..count {
        let mut values = Vec::with_capacity(dims);
        for _ in 0..dims {
            let x = if bits == 32 {
                T::from_f32(r.read_f32::<LittleEndian>()?)
            } else {
                T::from_f64(r.read_f64::<LittleEndian>()?)
            };
            let x = x.filter(|x| x.is_finite()).ok_or_else(|| IndexError::Format("non-finite vector value".into()))?;
            values.push(x);
        }
        vectors.push(EmbeddingVector::from_unit(values));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(IndexError::Format("trailing bytes after vector payload".into()));
    }
    VectorIndex::from_parts(passages, vectors, provider_id, config, built_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_index, HashEmbedder, SourceDocument};

    fn sample<T: Scalar>() -> VectorIndex<T> {
        let docs = vec![
            SourceDocument::new("bonds", "A bond pays coupons and returns its face value at maturity."),
            SourceDocument::new("tax", "Marginal rates apply to the income inside each bracket."),
        ];
        let cfg = RetrievalConfig { k: 3, chunk_size_words: 5, overlap_words: 1 };
        build_index(&docs, &HashEmbedder::new(32), &cfg, DateTime::from_timestamp_millis(1_700_000_000_123).unwrap())
            .unwrap()
    }

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let idx = sample::<f32>();
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FQIX");
        assert_eq!(buf[6], 32);
        let back: VectorIndex<f32> = read_index(&mut buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        let mut again = Vec::new();
        write_index(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let idx = sample::<f64>();
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        assert_eq!(buf[6], 64);
        let back: VectorIndex<f64> = read_index(&mut buf.as_slice()).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let idx = sample::<f32>();
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_index::<f32, _>(&mut bad.as_slice()), Err(IndexError::Format(_))));
        let cut = &buf[..buf.len() - 3];
        assert!(read_index::<f32, _>(&mut &cut[..]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_index::<f32, _>(&mut long.as_slice()).is_err());
    }
}
