//! Little-endian binary tensor table.
//!
//! ```text
//! "ACNN"  u32 version  u32 count
//! count × { u16 name_len, name (UTF-8), u8 dtype, u8 rank, rank × u32 dim, payload }
//! ```
//!
//! dtype 0 is `f32` (payload is `Π dims` little-endian floats); dtype 1 is raw
//! bytes (rank 1, payload is `dims[0]` bytes), used for text metadata.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ParamSet, Real, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ACNN";
pub const CHECKPOINT_VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_BYTES: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum EntryValue {
    F32 { dims: Vec<u32>, data: Vec<f32> },
    Bytes(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub value: EntryValue,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_tensor<T: Real>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        self.entries.push(Entry {
            name: name.into(),
            value: EntryValue::F32 {
                dims: t.shape().iter().map(|&d| d as u32).collect(),
                data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
            },
        });
    }

    pub fn push_bytes(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.entries.push(Entry {
            name: name.into(),
            value: EntryValue::Bytes(bytes.into()),
        });
    }

    pub fn push_params<T: Real>(&mut self, prefix: &str, params: &ParamSet<T>) {
        for (name, t) in params.names().iter().zip(params.tensors()) {
            self.push_tensor(format!("{prefix}{name}"), t);
        }
    }

    pub fn get(&self, name: &str) -> Option<&EntryValue> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.value)
    }

    pub fn tensor<T: Real>(&self, name: &str) -> Result<Tensor<T>> {
        match self.get(name) {
            Some(EntryValue::F32 { dims, data }) => Tensor::new(
                dims.iter().map(|&d| d as usize).collect(),
                data.iter().map(|&v| T::of(v as f64)).collect(),
            ),
            Some(EntryValue::Bytes(_)) => Err(Error::Corrupt(format!("entry {name} is not a tensor"))),
            None => Err(Error::ConfigMismatch(format!("checkpoint lacks entry {name}"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<String> {
        match self.get(name) {
            Some(EntryValue::Bytes(b)) => String::from_utf8(b.clone())
                .map_err(|_| Error::Corrupt(format!("entry {name} is not UTF-8"))),
            Some(_) => Err(Error::Corrupt(format!("entry {name} is not a byte string"))),
            None => Err(Error::ConfigMismatch(format!("checkpoint lacks entry {name}"))),
        }
    }

    /// Fill every entry of `params` from `prefix + name`.
    pub fn load_params<T: Real>(&self, prefix: &str, params: &mut ParamSet<T>) -> Result<()> {
        for i in 0..params.len() {
            let name = params.name(i).to_string();
            let t = self.tensor(&format!("{prefix}{name}"))?;
            params.assign(&name, t)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let name = e.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::invalid(format!("entry name too long: {}", e.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            match &e.value {
                EntryValue::F32 { dims, data } => {
                    let rank = u8::try_from(dims.len())
                        .map_err(|_| Error::invalid(format!("rank too large: {}", e.name)))?;
                    let len: usize = dims.iter().map(|&d| d as usize).product();
                    if len != data.len() {
                        return Err(Error::shape(format!("entry {} dims/payload mismatch", e.name)));
                    }
                    out.push(DTYPE_F32);
                    out.push(rank);
                    for d in dims {
                        out.extend_from_slice(&d.to_le_bytes());
                    }
                    for v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                EntryValue::Bytes(b) => {
                    out.push(DTYPE_BYTES);
                    out.push(1);
                    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
                    out.extend_from_slice(b);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Corrupt(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Corrupt("entry name is not UTF-8".into()))?
                .to_string();
            let dtype = r.take(1)?[0];
            let rank = r.take(1)?[0] as usize;
            let dims: Vec<u32> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let value = match dtype {
                DTYPE_F32 => {
                    let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
                    EntryValue::F32 {
                        dims,
                        data: raw
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    }
                }
                DTYPE_BYTES if rank == 1 => EntryValue::Bytes(r.take(n)?.to_vec()),
                _ => {
                    return Err(Error::Corrupt(format!(
                        "entry {name}: unsupported dtype {dtype} / rank {rank}"
                    )))
                }
            };
            entries.push(Entry { name, value });
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { entries })
    }

    /// Written to a sibling temporary file, then renamed into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let mut c = Checkpoint::new();
        c.push_tensor("w", &Tensor::<f32>::vector(vec![1.0, -2.0]).unwrap());
        let b = c.to_bytes().unwrap();
        let mut want = b"ACNN".to_vec();
        want.extend(1u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.extend(1u16.to_le_bytes());
        want.push(b'w');
        want.push(0);
        want.push(1);
        want.extend(2u32.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.0f32).to_le_bytes());
        assert_eq!(b, want);
    }

    #[test]
    fn rejects_corruption() {
        let mut c = Checkpoint::new();
        c.push_tensor("w", &Tensor::<f32>::matrix(2, 2, vec![1.0; 4]).unwrap());
        c.push_bytes("meta", "hello");
        let b = c.to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), c);
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&[]).is_err());
    }
}
