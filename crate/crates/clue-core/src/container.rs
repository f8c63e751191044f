//! Binary tensor container used for model checkpoints and explanation-set
//! vector sidecars.
//!
//! Layout: a human-readable UTF-8 header, then raw binary tensor records.
//!
//! ```text
//! clue-container v1\n
//! <key> = <value>\n        (zero or more, sorted by key)
//! tensors = <count>\n
//! \n
//! ```
//!
//! followed, per tensor and in order, by:
//!
//! ```text
//! u32 LE  name length in bytes
//! [u8]    name (UTF-8)
//! u32 LE  rank
//! u64 LE  dimension sizes, rank entries
//! f64 LE  values, row-major, product(dims) entries
//! ```
//!
//! The byte layout round-trips exactly: writing a loaded container
//! reproduces the input bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;

const MAGIC_LINE: &str = "clue-container v1";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("container i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("container format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
}

pub type Result<T> = std::result::Result<T, ContainerError>;

/// A named-tensor archive with string metadata.
#[derive(Debug, Clone, Default)]
pub struct Container {
    pub meta: BTreeMap<String, String>,
    tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(
            !key.contains('\n') && !key.contains('=') && !value.contains('\n'),
            "metadata must be single-line and '='-free"
        );
        self.meta.insert(key.to_string(), value);
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ContainerError::Format {
                offset: 0,
                message: format!("missing metadata key `{key}`"),
            })
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta_str(key)?
            .parse()
            .map_err(|_| ContainerError::Format {
                offset: 0,
                message: format!("metadata key `{key}` is not a valid value"),
            })
    }

    pub fn push(&mut self, name: &str, tensor: Tensor) {
        assert!(!name.is_empty(), "tensor name must be nonempty");
        self.tensors.push((name.to_string(), tensor));
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| ContainerError::Format {
            offset: 0,
            message: format!("missing tensor `{name}`"),
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "{MAGIC_LINE}")?;
        for (k, v) in &self.meta {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "tensors = {}", self.tensors.len())?;
        writeln!(w)?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut counter = CountingReader { inner: r, pos: 0 };
        let header = read_header(&mut counter)?;
        let mut lines = header.lines();
        let magic = lines.next().unwrap_or("");
        if magic != MAGIC_LINE {
            return Err(ContainerError::Format {
                offset: 0,
                message: format!("expected `{MAGIC_LINE}`, found `{magic}`"),
            });
        }
        let mut meta = BTreeMap::new();
        let mut count: Option<usize> = None;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once(" = ") else {
                return Err(ContainerError::Format {
                    offset: 0,
                    message: format!("malformed header line `{line}`"),
                });
            };
            if k == "tensors" {
                count = Some(v.parse().map_err(|_| ContainerError::Format {
                    offset: 0,
                    message: format!("bad tensor count `{v}`"),
                })?);
            } else {
                meta.insert(k.to_string(), v.to_string());
            }
        }
        let count = count.ok_or(ContainerError::Format {
            offset: 0,
            message: "header missing `tensors = N` line".into(),
        })?;

        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut counter)? as usize;
            if name_len > 4096 {
                return Err(ContainerError::Format {
                    offset: counter.pos,
                    message: format!("implausible tensor name length {name_len}"),
                });
            }
            let mut name_bytes = vec![0u8; name_len];
            counter.read_exact_at(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes).map_err(|_| ContainerError::Format {
                offset: counter.pos,
                message: "tensor name is not UTF-8".into(),
            })?;
            let rank = read_u32(&mut counter)? as usize;
            if rank > 8 {
                return Err(ContainerError::Format {
                    offset: counter.pos,
                    message: format!("implausible tensor rank {rank}"),
                });
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut counter)? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = vec![0.0f64; len];
            let mut buf = [0u8; 8];
            for v in &mut data {
                counter.read_exact_at(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            let tensor = Tensor::new(shape, data).map_err(|e| ContainerError::Format {
                offset: counter.pos,
                message: e.to_string(),
            })?;
            tensors.push((name, tensor));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }
}

struct CountingReader<'a, R: Read> {
    inner: &'a mut R,
    pos: u64,
}

impl<R: Read> CountingReader<'_, R> {
    fn read_exact_at(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| ContainerError::Format {
                offset: self.pos,
                message: format!("truncated: {e}"),
            })?;
        self.pos += buf.len() as u64;
        Ok(())
    }
}

fn read_header<R: Read>(r: &mut CountingReader<R>) -> Result<String> {
    // Header ends at the first blank line ("\n\n").
    let mut bytes = Vec::new();
    let mut one = [0u8; 1];
    loop {
        r.read_exact_at(&mut one)?;
        bytes.push(one[0]);
        if bytes.ends_with(b"\n\n") {
            break;
        }
        if bytes.len() > 1 << 20 {
            return Err(ContainerError::Format {
                offset: r.pos,
                message: "unterminated header".into(),
            });
        }
    }
    String::from_utf8(bytes).map_err(|_| ContainerError::Format {
        offset: 0,
        message: "header is not UTF-8".into(),
    })
}

fn read_u32<R: Read>(r: &mut CountingReader<R>) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact_at(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut CountingReader<R>) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact_at(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new();
        c.set_meta("kind", "test");
        c.set_meta("d_z", 8);
        c.push(
            "w1",
            Tensor::matrix(2, 3, vec![1.0, -2.5, 0.0, 3.25, 1e-300, -0.0]).unwrap(),
        );
        c.push("b1", Tensor::vector(&[0.5, 0.25, f64::MIN_POSITIVE]));
        c
    }

    #[test]
    fn byte_layout_round_trips_exactly() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Container::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta_parse::<usize>("d_z").unwrap(), 8);
        assert_eq!(back.get("w1").unwrap().shape(), &[2, 3]);
        assert_eq!(back.get("b1").unwrap().data()[2], f64::MIN_POSITIVE);
    }

    #[test]
    fn truncated_container_reports_offset() {
        let bytes = sample().to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        let err = Container::read_from(&mut &cut[..]).unwrap_err();
        match err {
            ContainerError::Format { offset, .. } => assert!(offset > 0),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = Container::read_from(&mut &b"nonsense v9\n\n"[..]).unwrap_err();
        assert!(err.to_string().contains("clue-container"));
    }
}
