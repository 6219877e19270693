use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CkptError, Result};
use crate::env::{Minigame, ObservationSpec};
use crate::net::{ArchitectureSpec, Variant};
use crate::numcore::{ParamSet, Tensor};

pub const MAGIC: [u8; 4] = *b"A3CK";
pub const FORMAT_VERSION: u32 = 1;
const OPTIM_PREFIX: &str = "optim.";

/// Position of a ChaCha8 stream, enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

impl Default for RngState {
    fn default() -> Self {
        Self::capture(&ChaCha8Rng::seed_from_u64(0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub variant: Variant,
    pub obs_spec: ObservationSpec,
    pub minigame: Minigame,
    pub global_step: u64,
    pub episodes: u64,
    pub mean_score: f64,
    pub rng: RngState,
    /// Identity of the checkpoint a transfer run started from.
    pub source: Option<String>,
}

impl Metadata {
    pub fn arch(&self) -> ArchitectureSpec {
        ArchitectureSpec::new(self.variant, self.obs_spec)
    }

    fn encode(&self) -> String {
        let o = &self.obs_spec;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("variant", self.variant.name().into());
        kv("minigame", self.minigame.name().into());
        kv("resolution", o.resolution.to_string());
        kv("screen_channels", o.screen_channels.to_string());
        kv("minimap_channels", o.minimap_channels.to_string());
        kv("flat_dim", o.flat_dim.to_string());
        kv("num_functions", o.num_functions.to_string());
        kv("global_step", self.global_step.to_string());
        kv("episodes", self.episodes.to_string());
        kv("mean_score", format!("{:?}", self.mean_score));
        kv("rng_seed", self.rng.seed.iter().map(|b| format!("{b:02x}")).collect());
        kv("rng_stream", self.rng.stream.to_string());
        kv("rng_word_pos", self.rng.word_pos.to_string());
        if let Some(src) = &self.source {
            kv("source", src.replace(['\n', '\r'], " "));
        }
        s
    }

    fn decode(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CkptError::BadMetadata(format!("line without '=': {line:?}")))?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .ok_or_else(|| CkptError::BadMetadata(format!("missing key `{k}`")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| CkptError::BadMetadata(format!("bad value for `{k}`: {v:?}")))
        }
        let seed_hex = get("rng_seed")?;
        if seed_hex.len() != 64 {
            return Err(CkptError::BadMetadata("rng_seed must be 64 hex digits".into()));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
                .map_err(|_| CkptError::BadMetadata("rng_seed is not hex".into()))?;
        }
        Ok(Self {
            variant: get("variant")?
                .parse()
                .map_err(|e| CkptError::BadMetadata(format!("{e}")))?,
            minigame: get("minigame")?
                .parse()
                .map_err(|e| CkptError::BadMetadata(format!("{e}")))?,
            obs_spec: ObservationSpec {
                resolution: num("resolution", get("resolution")?)?,
                screen_channels: num("screen_channels", get("screen_channels")?)?,
                minimap_channels: num("minimap_channels", get("minimap_channels")?)?,
                flat_dim: num("flat_dim", get("flat_dim")?)?,
                num_functions: num("num_functions", get("num_functions")?)?,
            },
            global_step: num("global_step", get("global_step")?)?,
            episodes: num("episodes", get("episodes")?)?,
            mean_score: num("mean_score", get("mean_score")?)?,
            rng: RngState {
                seed,
                stream: num("rng_stream", get("rng_stream")?)?,
                word_pos: num("rng_word_pos", get("rng_word_pos")?)?,
            },
            source: map.get("source").cloned(),
        })
    }
}

/// Parameters plus everything needed to resume or transfer a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: Metadata,
    pub params: ParamSet<f32>,
    /// Per-tensor RMSProp statistics, in parameter order.
    pub optimizer: Option<Vec<Vec<f32>>>,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let meta = self.metadata.encode();
        let mut out = Vec::with_capacity(16 + meta.len() + 4 * self.params.num_scalars());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        let extra = self.optimizer.as_ref().map_or(0, |o| o.len());
        out.extend_from_slice(&((self.params.len() + extra) as u32).to_le_bytes());
        let mut put = |name: &str, shape: &[usize], data: &[f32]| {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for p in self.params.iter() {
            put(&p.name, p.tensor.shape(), p.tensor.data());
        }
        if let Some(stats) = &self.optimizer {
            for (p, s) in self.params.iter().zip(stats) {
                put(&format!("{OPTIM_PREFIX}{}", p.name), p.tensor.shape(), s);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CkptError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CkptError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| CkptError::BadMetadata("metadata is not UTF-8".into()))?;
        let metadata = Metadata::decode(meta)?;
        let count = r.u32()? as usize;
        let mut params = ParamSet::new();
        let mut optim: Vec<(String, Vec<f32>)> = Vec::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CkptError::ShapeInconsistency("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(4).ok_or(CkptError::Truncated {
                needed: usize::MAX,
                offset: r.pos,
            })?)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if let Some(pname) = name.strip_prefix(OPTIM_PREFIX) {
                optim.push((pname.to_string(), data));
            } else {
                if params.index_of(&name).is_some() {
                    return Err(CkptError::ShapeInconsistency(format!("duplicate tensor `{name}`")));
                }
                params.push(name, Tensor::from_vec(&shape, data).expect("length from shape"));
            }
        }
        if r.pos != bytes.len() {
            return Err(CkptError::ShapeInconsistency(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        validate_against_arch(&metadata.arch(), &params)?;
        let optimizer = if optim.is_empty() {
            None
        } else {
            if optim.len() != params.len() {
                return Err(CkptError::ShapeInconsistency(format!(
                    "{} optimizer tensors for {} parameters",
                    optim.len(),
                    params.len()
                )));
            }
            let mut stats = Vec::with_capacity(optim.len());
            for (p, (name, s)) in params.iter().zip(optim) {
                if name != p.name || s.len() != p.tensor.len() {
                    return Err(CkptError::ShapeInconsistency(format!(
                        "optimizer tensor `{name}` does not mirror `{}`",
                        p.name
                    )));
                }
                stats.push(s);
            }
            Some(stats)
        };
        Ok(Self {
            metadata,
            params,
            optimizer,
        })
    }
}

pub(crate) fn validate_against_arch(arch: &ArchitectureSpec, params: &ParamSet<f32>) -> Result<()> {
    let expected = arch.layer_shapes();
    if expected.len() != params.len() {
        return Err(CkptError::ShapeInconsistency(format!(
            "{} declares {} tensors, file holds {}",
            arch.variant,
            expected.len(),
            params.len()
        )));
    }
    for ((name, shape), p) in expected.iter().zip(params.iter()) {
        if *name != p.name || shape.as_slice() != p.tensor.shape() {
            return Err(CkptError::ShapeInconsistency(format!(
                "expected {name} {shape:?}, found {} {:?}",
                p.name,
                p.tensor.shape()
            )));
        }
    }
    Ok(())
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
            .ok_or(CkptError::Truncated {
                needed: n,
                offset: self.pos,
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place. On any error the target is left untouched and the temporary
/// file is removed.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "checkpoint path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        let f = w.into_inner().map_err(|e| e.into_error())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn save(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = checkpoint.encode();
    write_atomic(path, |w| w.write_all(&bytes))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    Checkpoint::decode(&fs::read(path)?)
}
