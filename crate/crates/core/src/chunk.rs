//! Binary sample files.
//!
//! Layout, all little-endian:
//!
//! | field   | type      |
//! |---------|-----------|
//! | magic   | `b"QWS1"` |
//! | version | `u16` = 1 |
//! | m       | `u32`     |
//! | count   | `u64`     |
//! | flags   | `u8`: bit 0 log-density present, bit 1 physical flag present |
//!
//! followed by `count` records of `m` diagonal `f64`s, the `m(m−1)/2`
//! upper-triangle elements as `(re, im)` `f64` pairs in row-major order, then
//! the optional `f64` log-density and `u8` physical flag.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::proposal::ProposalSample;

pub const MAGIC: &[u8; 4] = b"QWS1";
pub const VERSION: u16 = 1;
const FLAG_LOG_G: u8 = 1;
const FLAG_PHYSICAL: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleChunk {
    pub dim: usize,
    pub states: Vec<HermitianMatrix>,
    pub log_g: Option<Vec<f64>>,
    pub physical: Option<Vec<bool>>,
}

impl SampleChunk {
    pub fn from_states(dim: usize, states: Vec<HermitianMatrix>) -> Self {
        SampleChunk { dim, states, log_g: None, physical: None }
    }

    pub fn from_proposal(dim: usize, sample: ProposalSample) -> Self {
        SampleChunk { dim, states: sample.states, log_g: Some(sample.log_g), physical: Some(sample.physical) }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if let Some(s) = self.states.iter().find(|s| s.dim() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, found: s.dim() });
        }
        for extra in [self.log_g.as_ref().map(Vec::len), self.physical.as_ref().map(Vec::len)].into_iter().flatten() {
            if extra != self.states.len() {
                return Err(Error::DimensionMismatch { expected: self.states.len(), found: extra });
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        let flags = if self.log_g.is_some() { FLAG_LOG_G } else { 0 } | if self.physical.is_some() { FLAG_PHYSICAL } else { 0 };
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.states.len() as u64).to_le_bytes())?;
        w.write_all(&[flags])?;
        for (i, s) in self.states.iter().enumerate() {
            for d in s.diag() {
                w.write_all(&d.to_le_bytes())?;
            }
            for z in s.upper() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
            if let Some(lg) = &self.log_g {
                w.write_all(&lg[i].to_le_bytes())?;
            }
            if let Some(p) = &self.physical {
                w.write_all(&[u8::from(p[i])])?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(read_array(r)?) as usize;
        if dim == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let count = u64::from_le_bytes(read_array(r)?);
        let [flags] = read_array::<1, _>(r)?;
        if flags & !(FLAG_LOG_G | FLAG_PHYSICAL) != 0 {
            return Err(Error::Format(format!("unknown flags {flags:#04x}")));
        }
        let n_up = dim * (dim - 1) / 2;
        let mut states = Vec::new();
        let mut log_g = (flags & FLAG_LOG_G != 0).then(Vec::new);
        let mut physical = (flags & FLAG_PHYSICAL != 0).then(Vec::new);
        for _ in 0..count {
            let diag = (0..dim).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            let upper = (0..n_up)
                .map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?)))
                .collect::<Result<Vec<_>>>()?;
            states.push(HermitianMatrix::from_parts(dim, diag, upper)?);
            if let Some(lg) = log_g.as_mut() {
                lg.push(read_f64(r)?);
            }
            if let Some(p) = physical.as_mut() {
                let [b] = read_array::<1, _>(r)?;
                if b > 1 {
                    return Err(Error::Format(format!("physical flag byte {b}")));
                }
                p.push(b == 1);
            }
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Format("trailing bytes after the last record".into()));
        }
        Ok(SampleChunk { dim, states, log_g, physical })
    }

    /// Writes to `path`; on failure the partial file is removed.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let res = (|| {
            let mut w = BufWriter::new(File::create(path)?);
            self.write_to(&mut w)?;
            w.flush()?;
            Ok(())
        })();
        if res.is_err() {
            let _ = std::fs::remove_file(path);
        }
        res
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}
