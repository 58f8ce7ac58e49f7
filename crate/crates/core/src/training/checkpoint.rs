//! Checkpoint file layout, all integers little-endian:
//!
//! ```text
//! "TTCK" u32:version
//! u32:frames u32:patch u32:embed_dim u32:heads u32:st_blocks u32:mlp_hidden
//! u32:resolution u32:branches u32:n_mg u32×n_mg:mg_channels
//! u32:n_tensors { u32:len f32×len }×n_tensors      (Layout order)
//! u32:has_state
//! state: u64:step u64:epoch u64:cursor u64:seed u32:n_order u32×n_order
//!        [u8;32]:rng_seed u64:rng_stream u128:rng_word_pos
//!        u64:adam_t tensors(m) tensors(v)
//!        u32:has_best f64:best_auc tensors(best)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::RunState;
use crate::error::{format_err, Error, Result};
use crate::model::{BranchMode, ModelConfig, ModelParams};

const MAGIC: &[u8; 4] = b"TTCK";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("value fits in u32"));
    }

    fn tensors<'a>(&mut self, ts: impl Iterator<Item = &'a [f32]>) {
        for t in ts {
            self.usize(t.len());
            for v in t {
                self.0.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return format_err("truncated checkpoint");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn tensors(&mut self, count: usize) -> Result<Vec<Vec<f32>>> {
        (0..count)
            .map(|_| {
                let n = self.usize()?;
                self.f32s(n)
            })
            .collect()
    }
}

fn read_config(r: &mut Reader<'_>) -> Result<ModelConfig> {
    let mut w = [0usize; 9];
    for v in &mut w {
        *v = r.usize()?;
    }
    let [frames, patch, embed_dim, heads, st_blocks, mlp_hidden, resolution, branches, n_mg] = w;
    if n_mg > 64 {
        return format_err(format!("implausible convolution count {n_mg}"));
    }
    let mg_channels = (0..n_mg).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let branches = BranchMode::from_code(branches as u32)
        .ok_or_else(|| Error::Format(format!("unknown branch mode code {branches}")))?;
    let cfg = ModelConfig { frames, patch, embed_dim, heads, st_blocks, mg_channels, mlp_hidden, resolution, branches };
    cfg.validate().map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    Ok(cfg)
}

fn params_from(cfg: &ModelConfig, data: Vec<Vec<f32>>) -> Result<ModelParams> {
    ModelParams::from_tensors(cfg, data).map_err(|e| Error::Format(format!("checkpoint tensors: {e}")))
}

pub fn checkpoint_bytes(params: &ModelParams, state: Option<&RunState>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let c = &params.config;
    for v in [c.frames, c.patch, c.embed_dim, c.heads, c.st_blocks, c.mlp_hidden, c.resolution] {
        w.usize(v);
    }
    w.u32(c.branches.code());
    w.usize(c.mg_channels.len());
    for &ch in &c.mg_channels {
        w.usize(ch);
    }
    w.usize(params.tensors.len());
    w.tensors(params.tensors.iter().map(|t| t.data.as_slice()));
    match state {
        None => w.u32(0),
        Some(s) => {
            w.u32(1);
            w.u64(s.step);
            w.u64(s.epoch);
            w.u64(s.cursor);
            w.u64(s.seed);
            w.usize(s.order.len());
            for &i in &s.order {
                w.u32(i);
            }
            w.0.extend_from_slice(&s.rng.get_seed());
            w.u64(s.rng.get_stream());
            w.0.extend_from_slice(&s.rng.get_word_pos().to_le_bytes());
            w.u64(s.adam.t);
            w.tensors(s.adam.m.iter().map(Vec::as_slice));
            w.tensors(s.adam.v.iter().map(Vec::as_slice));
            match &s.best {
                None => w.u32(0),
                Some((auc, best)) => {
                    w.u32(1);
                    w.0.extend_from_slice(&auc.to_le_bytes());
                    w.tensors(best.tensors.iter().map(|t| t.data.as_slice()));
                }
            }
        }
    }
    w.0
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(ModelParams, Option<RunState>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Format("truncated checkpoint header".into()))? != MAGIC {
        return format_err("not a checkpoint (bad magic)");
    }
    let version = r.u32()?;
    if version != VERSION {
        return format_err(format!("unsupported checkpoint version {version}"));
    }
    let cfg = read_config(&mut r)?;
    let count = r.usize()?;
    let params = params_from(&cfg, r.tensors(count)?)?;
    let state = match r.u32()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let epoch = r.u64()?;
            let cursor = r.u64()?;
            let seed = r.u64()?;
            let n = r.usize()?;
            let order = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let rng_seed: [u8; 32] = r.take(32)?.try_into().unwrap();
            let stream = r.u64()?;
            let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
            let mut rng = ChaCha8Rng::from_seed(rng_seed);
            rng.set_stream(stream);
            rng.set_word_pos(word_pos);
            let t = r.u64()?;
            let m = r.tensors(count)?;
            let v = r.tensors(count)?;
            for (i, (a, b)) in m.iter().zip(&v).enumerate() {
                if a.len() != params.tensors[i].data.len() || b.len() != a.len() {
                    return format_err("optimizer state does not match parameters");
                }
            }
            let best = match r.u32()? {
                0 => None,
                1 => {
                    let auc = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
                    Some((auc, params_from(&cfg, r.tensors(count)?)?))
                }
                f => return format_err(format!("bad best-params flag {f}")),
            };
            if cursor > order.len() as u64 {
                return format_err("training cursor beyond epoch order");
            }
            Some(RunState { step, epoch, cursor, seed, order, rng, adam: Adam { t, m, v }, best })
        }
        f => return format_err(format!("bad state flag {f}")),
    };
    if r.pos != bytes.len() {
        return format_err("trailing bytes after checkpoint");
    }
    Ok((params, state))
}

/// Writes through a temporary file so an interrupted save never leaves a
/// half-written checkpoint at `path`.
pub fn save_checkpoint(path: &Path, params: &ModelParams, state: Option<&RunState>) -> Result<()> {
    let bytes = checkpoint_bytes(params, state);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Option<RunState>)> {
    let bytes = fs::read(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
    parse_checkpoint(&bytes)
}
