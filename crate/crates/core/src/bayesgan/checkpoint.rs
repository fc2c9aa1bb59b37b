//! Binary sample-set checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "BGAN" u32:version
//! spec(generator) spec(discriminator)      spec = u32 head, u32 hidden, u32 len, u32 sizes[len]
//! u32 J_g, u32 J_d, u32 M, u64 collected_gen, u64 collected_disc
//! u64 iteration, u64 d_seen
//! cursor                                    stream, u64 len, u32 perm[len], u64 pos, u64 consumed
//! stream gen_noise[J_g], stream disc_noise[J_d]
//! chain gen[J_g * M], chain disc[J_d * M]
//! collected gen[..], collected disc[..]
//! ```
//!
//! A stream is `u64 seed, u64 id, u128 word position`; a chain is the
//! parameters followed by momentum, `u64 step`, `u64 d_seen`, both Adam
//! moment arrays, `u8 phase` and its noise stream; a collected entry is
//! `u64 iteration, u64 chain` and the parameters. Real arrays are f64 with
//! lengths implied by the specs.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::netcore::{Activation, NetworkSpec, OutputHead, ParamVector};
use crate::sghmc::{ChainState, NoiseStream, Phase};

use super::{Chain, Collected, DataCursor, SampleSet, TrainConfig};

const MAGIC: &[u8; 4] = b"BGAN";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn reals(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn spec(&mut self, s: &NetworkSpec) {
        self.u32(s.head().code());
        self.u32(match s.hidden() {
            Activation::Relu => 0,
        });
        self.u32(s.layer_sizes().len() as u32);
        for &l in s.layer_sizes() {
            self.u32(l as u32);
        }
    }
    fn stream(&mut self, s: &NoiseStream) {
        self.u64(s.seed());
        self.u64(s.stream());
        self.u128(s.word_pos());
    }
    fn chain(&mut self, c: &Chain) {
        self.reals(c.params.values());
        let s = &c.state;
        self.reals(&s.v);
        self.u64(s.step);
        self.u64(s.d_seen);
        self.reals(&s.adam_m);
        self.reals(&s.adam_v);
        self.u8(match s.phase {
            Phase::BurnIn => 0,
            Phase::Sghmc => 1,
        });
        self.stream(&s.noise);
    }
    fn collected(&mut self, c: &Collected) {
        self.u64(c.iteration);
        self.u64(c.chain as u64);
        self.reals(c.params.values());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("file ends while reading {what} (needed {n} bytes at {})", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn fail<T>(&self, at: usize, message: String) -> Result<T> {
        Err(Error::Format {
            offset: at as u64,
            message,
        })
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn u128(&mut self, what: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, what)?.try_into().unwrap()))
    }
    fn count(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        // every counted item occupies at least one byte
        if v > (self.bytes.len() - self.pos) as u64 {
            return self.fail(at, format!("{what} count {v} exceeds the file size"));
        }
        Ok(v as usize)
    }
    fn reals(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.saturating_mul(8), what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn spec(&mut self) -> Result<NetworkSpec> {
        let at = self.pos;
        let head = self.u32("output head")?;
        let head = OutputHead::from_code(head).map_or_else(|| self.fail(at, format!("unknown head code {head}")), Ok)?;
        let at = self.pos;
        let hidden = match self.u32("activation")? {
            0 => Activation::Relu,
            other => return self.fail(at, format!("unknown activation code {other}")),
        };
        let at = self.pos;
        let len = self.u32("layer count")? as usize;
        if len > 64 {
            return self.fail(at, format!("implausible layer count {len}"));
        }
        let sizes = (0..len)
            .map(|_| self.u32("layer size").map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec::new(sizes, hidden, head).or_else(|e| self.fail(at, format!("invalid network spec: {e}")))
    }
    fn stream(&mut self) -> Result<NoiseStream> {
        let seed = self.u64("stream seed")?;
        let id = self.u64("stream id")?;
        let pos = self.u128("stream position")?;
        Ok(NoiseStream::at(seed, id, pos))
    }
    fn params(&mut self, spec: &Arc<NetworkSpec>, what: &str) -> Result<ParamVector> {
        let at = self.pos;
        let v = self.reals(spec.param_count(), what)?;
        ParamVector::new(spec.clone(), v).or_else(|e| self.fail(at, format!("{what}: {e}")))
    }
    fn chain(&mut self, spec: &Arc<NetworkSpec>) -> Result<Chain> {
        let params = self.params(spec, "chain parameters")?;
        let p = spec.param_count();
        let v = self.reals(p, "momentum")?;
        let step = self.u64("step")?;
        let d_seen = self.u64("d_seen")?;
        let adam_m = self.reals(p, "adam first moment")?;
        let adam_v = self.reals(p, "adam second moment")?;
        let at = self.pos;
        let phase = match self.u8("phase")? {
            0 => Phase::BurnIn,
            1 => Phase::Sghmc,
            other => return self.fail(at, format!("unknown phase {other}")),
        };
        let noise = self.stream()?;
        Ok(Chain {
            params,
            state: ChainState {
                v,
                step,
                d_seen,
                adam_m,
                adam_v,
                phase,
                noise,
            },
        })
    }
    fn collected(&mut self, spec: &Arc<NetworkSpec>) -> Result<Collected> {
        Ok(Collected {
            iteration: self.u64("collection iteration")?,
            chain: self.u64("collection chain")? as usize,
            params: self.params(spec, "collected parameters")?,
        })
    }
}

pub fn encode(set: &SampleSet) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.spec(set.gen_spec());
    w.spec(set.disc_spec());
    w.u32(set.j_gen as u32);
    w.u32(set.j_disc as u32);
    w.u32(set.num_mcmc as u32);
    w.u64(set.collected_gen.len() as u64);
    w.u64(set.collected_disc.len() as u64);
    w.u64(set.iteration);
    w.u64(set.d_seen);
    w.stream(&set.data.stream);
    w.u64(set.data.perm.len() as u64);
    for &i in &set.data.perm {
        w.u32(i);
    }
    w.u64(set.data.pos as u64);
    w.u64(set.data.consumed);
    for s in set.gen_noise.iter().chain(&set.disc_noise) {
        w.stream(s);
    }
    for c in set.gen.iter().chain(&set.disc) {
        w.chain(c);
    }
    for c in set.collected_gen.iter().chain(&set.collected_disc) {
        w.collected(c);
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<SampleSet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return r.fail(0, "not a checkpoint (bad magic)".into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let gen_spec = Arc::new(r.spec()?);
    let disc_spec = Arc::new(r.spec()?);
    let at = r.pos;
    let j_gen = r.u32("J_g")? as usize;
    let j_disc = r.u32("J_d")? as usize;
    let num_mcmc = r.u32("M")? as usize;
    if j_gen == 0 || j_disc == 0 || num_mcmc == 0 {
        return r.fail(at, "chain counts must be positive".into());
    }
    let n_coll_gen = r.count("collected generators")?;
    let n_coll_disc = r.count("collected discriminators")?;
    let iteration = r.u64("iteration")?;
    let d_seen = r.u64("d_seen")?;
    let stream = r.stream()?;
    let n_perm = r.count("permutation")?;
    let perm = (0..n_perm).map(|_| r.u32("permutation")).collect::<Result<Vec<_>>>()?;
    let at = r.pos;
    let pos = r.u64("cursor position")? as usize;
    if pos > perm.len() {
        return r.fail(at, format!("cursor position {pos} beyond permutation length {}", perm.len()));
    }
    let consumed = r.u64("consumed")?;
    let gen_noise = (0..j_gen).map(|_| r.stream()).collect::<Result<Vec<_>>>()?;
    let disc_noise = (0..j_disc).map(|_| r.stream()).collect::<Result<Vec<_>>>()?;
    let gen = (0..j_gen * num_mcmc).map(|_| r.chain(&gen_spec)).collect::<Result<Vec<_>>>()?;
    let disc = (0..j_disc * num_mcmc).map(|_| r.chain(&disc_spec)).collect::<Result<Vec<_>>>()?;
    let collected_gen = (0..n_coll_gen).map(|_| r.collected(&gen_spec)).collect::<Result<Vec<_>>>()?;
    let collected_disc = (0..n_coll_disc).map(|_| r.collected(&disc_spec)).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return r.fail(r.pos, format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(SampleSet {
        j_gen,
        j_disc,
        num_mcmc,
        gen,
        disc,
        gen_noise,
        disc_noise,
        data: DataCursor {
            stream,
            perm,
            pos,
            consumed,
        },
        iteration,
        d_seen,
        collected_gen,
        collected_disc,
    })
}

/// Writes the whole sample set, including collected history and every
/// random stream position, so a resumed run continues bit-identically.
pub fn save_checkpoint(set: &SampleSet, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(set)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SampleSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint and checks that it fits `cfg`.
pub fn load_checkpoint_for(path: &Path, cfg: &TrainConfig) -> Result<SampleSet> {
    let set = load_checkpoint(path)?;
    check_compatible(&set, cfg)?;
    Ok(set)
}

pub fn check_compatible(set: &SampleSet, cfg: &TrainConfig) -> Result<()> {
    if **set.gen_spec() != *cfg.gen_spec {
        return Err(Error::SpecMismatch(format!(
            "checkpoint generator is {:?}, config expects {:?}",
            set.gen_spec().layer_sizes(),
            cfg.gen_spec.layer_sizes()
        )));
    }
    if **set.disc_spec() != *cfg.disc_spec {
        return Err(Error::SpecMismatch(format!(
            "checkpoint discriminator is {:?}, config expects {:?}",
            set.disc_spec().layer_sizes(),
            cfg.disc_spec.layer_sizes()
        )));
    }
    if set.j_gen != cfg.posterior.j_gen || set.j_disc != cfg.posterior.j_disc || set.num_mcmc != cfg.num_mcmc {
        return Err(Error::SpecMismatch(format!(
            "checkpoint has J_g={} J_d={} M={}, config has J_g={} J_d={} M={}",
            set.j_gen, set.j_disc, set.num_mcmc, cfg.posterior.j_gen, cfg.posterior.j_disc, cfg.num_mcmc
        )));
    }
    Ok(())
}
