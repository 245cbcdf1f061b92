//! Binary feature file.
//!
//! Little-endian layout:
//!
//! ```text
//! "UTFT" | version u32 | d u32 | count u32
//! count × ( id_len u32 | id bytes
//!         | dv u32 | dv × f32 visual
//!         | n u32 | n × (u f64 | v f64 | d × f32) )
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::matching::{FeatureSequence, WordFeature};

const MAGIC: &[u8; 4] = b"UTFT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredWord {
    pub center: (f64, f64),
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub product_id: String,
    pub visual: Vec<f32>,
    pub words: Vec<StoredWord>,
}

impl FeatureRecord {
    pub fn visual_f64(&self) -> Vec<f64> {
        self.visual.iter().map(|&v| f64::from(v)).collect()
    }

    /// Word features widened to `f64`, without positional encoding.
    pub fn sequence(&self) -> Result<FeatureSequence> {
        FeatureSequence::new(
            self.words
                .iter()
                .map(|w| WordFeature {
                    vector: w.vector.iter().map(|&v| f64::from(v)).collect(),
                    center: w.center,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    /// Width of every word vector.
    pub d: usize,
    pub records: Vec<FeatureRecord>,
}

impl FeatureFile {
    pub fn get(&self, product_id: &str) -> Option<&FeatureRecord> {
        self.records.iter().find(|r| r.product_id == product_id)
    }
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} does not fit in u32")))
}

pub fn write_features(ff: &FeatureFile) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    // writes into a Vec cannot fail
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u32::<LittleEndian>(to_u32(ff.d, "d")?).unwrap();
    out.write_u32::<LittleEndian>(to_u32(ff.records.len(), "record count")?).unwrap();
    for r in &ff.records {
        out.write_u32::<LittleEndian>(to_u32(r.product_id.len(), "id length")?).unwrap();
        out.extend_from_slice(r.product_id.as_bytes());
        out.write_u32::<LittleEndian>(to_u32(r.visual.len(), "visual width")?).unwrap();
        for &v in &r.visual {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
        out.write_u32::<LittleEndian>(to_u32(r.words.len(), "word count")?).unwrap();
        for w in &r.words {
            if w.vector.len() != ff.d {
                return Err(Error::DimensionMismatch {
                    expected: ff.d,
                    found: w.vector.len(),
                });
            }
            out.write_f64::<LittleEndian>(w.center.0).unwrap();
            out.write_f64::<LittleEndian>(w.center.1).unwrap();
            for &v in &w.vector {
                out.write_f32::<LittleEndian>(v).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn save_features(path: impl AsRef<Path>, ff: &FeatureFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_features(ff)?).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_features(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    fn need(&self, bytes: usize, what: &str) -> Result<()> {
        if self.remaining() < bytes {
            return Err(Error::Format(format!(
                "truncated at byte {} reading {what}: need {bytes}, have {}",
                self.cur.position(),
                self.remaining()
            )));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        self.need(4, what)?;
        Ok(self.cur.read_u32::<LittleEndian>().unwrap() as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.need(8, what)?;
        Ok(self.cur.read_f64::<LittleEndian>().unwrap())
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        self.need(n.saturating_mul(4), what)?;
        let mut v = vec![0f32; n];
        self.cur.read_f32_into::<LittleEndian>(&mut v).unwrap();
        Ok(v)
    }
}

pub fn parse_features(bytes: &[u8]) -> Result<FeatureFile> {
    let mut r = Reader { cur: Cursor::new(bytes) };
    r.need(4, "magic")?;
    let mut magic = [0u8; 4];
    r.cur.read_exact(&mut magic).unwrap();
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"UTFT\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let d = r.u32("d")?;
    let count = r.u32("record count")?;

    // every record takes at least 12 bytes, which bounds the allocation
    let mut records = Vec::with_capacity(count.min(r.remaining() / 12));
    for i in 0..count {
        let ctx = |what: &str| format!("record {i} {what}");
        let len = r.u32(&ctx("id length"))?;
        r.need(len, &ctx("id"))?;
        let start = r.cur.position() as usize;
        let product_id = std::str::from_utf8(&bytes[start..start + len])
            .map_err(|_| Error::Format(ctx("id is not UTF-8")))?
            .to_string();
        r.cur.set_position((start + len) as u64);

        let dv = r.u32(&ctx("visual width"))?;
        let visual = r.f32s(dv, &ctx("visual vector"))?;
        let n = r.u32(&ctx("word count"))?;
        let mut words = Vec::with_capacity(n.min(r.remaining() / 16));
        for _ in 0..n {
            let u = r.f64(&ctx("word center"))?;
            let v = r.f64(&ctx("word center"))?;
            let vector = r.f32s(d, &ctx("word vector"))?;
            words.push(StoredWord { center: (u, v), vector });
        }
        records.push(FeatureRecord {
            product_id,
            visual,
            words,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes after {count} records", r.remaining())));
    }
    Ok(FeatureFile { d, records })
}
