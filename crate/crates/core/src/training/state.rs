//! Binary snapshot of everything a GAN training run mutates besides the
//! network weights: optimizer moments, batch-stream positions, replay-pool
//! contents and every RNG's stream position. Restoring a snapshot (plus the
//! four weight files saved alongside) replays the remainder of a run
//! bit-for-bit.
//!
//! Same file discipline as the weight format: a magic first line, then raw
//! little-endian payloads in a fixed order, with a trailing-bytes check.

use crate::error::{Error, Result};
use ndarray::{ArrayD, IxDyn};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8] = b"tactile-s2r trainer state v1\n";

#[derive(Debug)]
pub(crate) struct AdamSnapshot {
    pub t: u64,
    pub m: Vec<ArrayD<f32>>,
    pub v: Vec<ArrayD<f32>>,
}

#[derive(Debug)]
pub(crate) struct StreamSnapshot {
    pub word_pos: u128,
    pub order: Vec<usize>,
    pub cursor: usize,
}

#[derive(Debug)]
pub(crate) struct PoolSnapshot {
    pub word_pos: u128,
    pub images: Vec<ArrayD<f32>>,
}

/// Mutable state of a GAN trainer after some number of completed steps.
/// Array order is fixed: optimizers (G, F, D_s, D_r), streams (sim, real),
/// pools (fake-real, fake-sim).
#[derive(Debug)]
pub(crate) struct TrainerState {
    pub step: u64,
    pub adams: [AdamSnapshot; 4],
    pub streams: [StreamSnapshot; 2],
    pub pools: [PoolSnapshot; 2],
}

struct Writer {
    w: BufWriter<File>,
    path: PathBuf,
}

impl Writer {
    fn create(path: &Path) -> Result<Self> {
        Ok(Writer {
            w: BufWriter::new(File::create(path).map_err(|e| Error::io(path.to_path_buf(), e))?),
            path: path.to_path_buf(),
        })
    }

    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.w
            .write_all(b)
            .map_err(|e| Error::io(self.path.clone(), e))
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn u128(&mut self, v: u128) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn array(&mut self, a: &ArrayD<f32>) -> Result<()> {
        self.u64(a.ndim() as u64)?;
        for &d in a.shape() {
            self.u64(d as u64)?;
        }
        for &x in a.iter() {
            self.bytes(&x.to_le_bytes())?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(self.path.clone(), e))
    }
}

struct Reader {
    r: BufReader<File>,
    path: PathBuf,
}

impl Reader {
    fn open(path: &Path) -> Result<Self> {
        Ok(Reader {
            r: BufReader::new(File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?),
            path: path.to_path_buf(),
        })
    }

    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r
            .read_exact(buf)
            .map_err(|e| Error::io(self.path.clone(), e))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn u128(&mut self) -> Result<u128> {
        let mut b = [0u8; 16];
        self.bytes(&mut b)?;
        Ok(u128::from_le_bytes(b))
    }

    fn array(&mut self) -> Result<ArrayD<f32>> {
        let ndim = self.u64()? as usize;
        if ndim > 8 {
            return Err(Error::Format(format!("implausible tensor rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        if len > (1 << 28) {
            return Err(Error::Format(format!("implausible tensor size {len}")));
        }
        let mut buf = vec![0u8; len * 4];
        self.bytes(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| Error::Format(format!("trainer state tensor: {e}")))
    }

    fn expect_eof(mut self) -> Result<()> {
        let mut trailing = [0u8; 1];
        match self.r.read(&mut trailing).map_err(|e| Error::io(self.path.clone(), e))? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after trainer state".into())),
        }
    }
}

pub(crate) fn save_state(path: &Path, state: &TrainerState) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.bytes(MAGIC)?;
    w.u64(state.step)?;
    for adam in &state.adams {
        w.u64(adam.t)?;
        w.u64(adam.m.len() as u64)?;
        for (m, v) in adam.m.iter().zip(&adam.v) {
            w.array(m)?;
            w.array(v)?;
        }
    }
    for stream in &state.streams {
        w.u128(stream.word_pos)?;
        w.u64(stream.cursor as u64)?;
        w.u64(stream.order.len() as u64)?;
        for &i in &stream.order {
            w.u64(i as u64)?;
        }
    }
    for pool in &state.pools {
        w.u128(pool.word_pos)?;
        w.u64(pool.images.len() as u64)?;
        for img in &pool.images {
            w.array(img)?;
        }
    }
    w.finish()
}

pub(crate) fn load_state(path: &Path) -> Result<TrainerState> {
    let mut r = Reader::open(path)?;
    let mut magic = vec![0u8; MAGIC.len()];
    r.bytes(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format("not a trainer state file".into()));
    }
    let step = r.u64()?;

    let mut adams = Vec::with_capacity(4);
    for _ in 0..4 {
        let t = r.u64()?;
        let n = r.u64()? as usize;
        if n > (1 << 20) {
            return Err(Error::Format(format!("implausible tensor count {n}")));
        }
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            m.push(r.array()?);
            v.push(r.array()?);
        }
        adams.push(AdamSnapshot { t, m, v });
    }

    let mut streams = Vec::with_capacity(2);
    for _ in 0..2 {
        let word_pos = r.u128()?;
        let cursor = r.u64()? as usize;
        let n = r.u64()? as usize;
        if n > (1 << 28) {
            return Err(Error::Format(format!("implausible stream length {n}")));
        }
        let mut order = Vec::with_capacity(n);
        for _ in 0..n {
            order.push(r.u64()? as usize);
        }
        streams.push(StreamSnapshot {
            word_pos,
            order,
            cursor,
        });
    }

    let mut pools = Vec::with_capacity(2);
    for _ in 0..2 {
        let word_pos = r.u128()?;
        let n = r.u64()? as usize;
        if n > (1 << 16) {
            return Err(Error::Format(format!("implausible pool size {n}")));
        }
        let mut images = Vec::with_capacity(n);
        for _ in 0..n {
            images.push(r.array()?);
        }
        pools.push(PoolSnapshot { word_pos, images });
    }
    r.expect_eof()?;

    Ok(TrainerState {
        step,
        adams: adams
            .try_into()
            .map_err(|_| Error::Format("wrong optimizer block count".into()))?,
        streams: streams
            .try_into()
            .map_err(|_| Error::Format("wrong stream block count".into()))?,
        pools: pools
            .try_into()
            .map_err(|_| Error::Format("wrong pool block count".into()))?,
    })
}
