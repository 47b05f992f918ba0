use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamState, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::models::{build_model, Model, ModelConfig};
use crate::numcore::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SLVM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: ParamStore,
    pub state: TrainState,
}

#[derive(Serialize, Deserialize)]
struct Configs {
    model: ModelConfig,
    train: TrainConfig,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn reals(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n).ok().filter(|&n| n <= self.buf.len()).ok_or_else(|| Error::Format(format!("bad length {n}")))
    }
    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.len()?;
        Ok(self.take(n)?.to_vec())
    }
    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?).map_err(|e| Error::Format(format!("bad utf-8: {e}")))
    }
    fn reals(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("bad length".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let cfg = toml::to_string(&Configs {
            model: self.model.clone(),
            train: self.train.clone(),
        })
        .map_err(|e| Error::Format(format!("config: {e}")))?;
        w.bytes(cfg.as_bytes());

        w.u64(self.params.len() as u64);
        for (name, t) in self.params.iter() {
            w.bytes(name.as_bytes());
            w.u64(t.shape().len() as u64);
            for &d in t.shape() {
                w.u64(d as u64);
            }
            w.reals(t.data());
        }

        let st = &self.state;
        w.u64(st.adam.t);
        for moments in [&st.adam.m, &st.adam.v] {
            for (name, m) in self.params.iter().map(|(n, _)| n).zip(moments) {
                w.bytes(name.as_bytes());
                w.reals(m);
            }
        }
        w.u64(st.step);
        w.0.extend_from_slice(&st.rng.get_seed());
        w.u64(st.rng.get_stream());
        w.0.extend_from_slice(&st.rng.get_word_pos().to_le_bytes());
        w.u64(st.over_budget);
        w.u64(st.diverged_at.map_or(0, |s| s + 1));
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        ensure_format(r.take(4)? == CHECKPOINT_MAGIC, "not a checkpoint (bad magic)")?;
        let version = r.u32()?;
        ensure_format(version == CHECKPOINT_VERSION, &format!("unsupported checkpoint version {version}"))?;
        let cfg: Configs = toml::from_str(&r.string()?).map_err(|e| Error::Format(format!("config: {e}")))?;

        let mut params = ParamStore::new();
        for _ in 0..r.u64()? {
            let name = r.string()?;
            let ndim = r.len()?;
            let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let data = r.reals()?;
            params.insert(name, Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?);
        }

        let t = r.u64()?;
        let mut moments = [Vec::new(), Vec::new()];
        for slot in &mut moments {
            for (name, p) in params.iter() {
                ensure_format(r.string()? == name, "optimizer moments do not match the parameter table")?;
                let m = r.reals()?;
                ensure_format(m.len() == p.numel(), "optimizer moment has the wrong size")?;
                slot.push(m);
            }
        }
        let [m, v] = moments;
        let step = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let over_budget = r.u64()?;
        let diverged_at = r.u64()?.checked_sub(1);
        ensure_format(r.pos == buf.len(), "trailing bytes after checkpoint")?;
        Ok(Self {
            model: cfg.model,
            train: cfg.train,
            params,
            state: TrainState {
                step,
                adam: AdamState { m, v, t },
                rng,
                over_budget,
                diverged_at,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Rebuilds the model from its recorded config and loads the weights by
    /// name. Architecture is never inferred from the weights.
    pub fn restore(&self) -> Result<Model> {
        let mut model = build_model(&self.model, 0)?;
        model.params_mut().load_from(&self.params)?;
        Ok(model)
    }
}

fn ensure_format(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Format(msg.to_string()))
    }
}
