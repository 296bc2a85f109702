//! Binary checkpoint of a [`Simulation`]: all chain states, RNG positions and
//! accumulators, so that a resumed run continues bit-identically.
//!
//! Layout (little endian): magic, version `u32`, parameter hash `u64`, chain
//! count, per-chain blocks, and a trailing SHA-256 of everything before it.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Chain, LogRow, McParams, PathConfig, Simulation, SweepStats, Widths};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::observables::ObservableAccumulator;
use crate::stats::{Blocking, Level};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"QCRYCKPT";
const DIGEST_LEN: usize = 32;

/// Hash of everything that must match for a resume to be valid. The sweep
/// budget is excluded so a finished run can be extended.
pub(crate) fn params_hash(params: &ModelParams, mc: &McParams) -> u64 {
    let mut h = Sha256::new();
    for x in [params.mass, params.rigidity, params.coupling, params.potential.h()] {
        h.update(x.to_le_bytes());
    }
    h.update((params.potential.coeffs().len() as u64).to_le_bytes());
    for c in params.potential.coeffs() {
        h.update(c.to_le_bytes());
    }
    for n in [
        params.lattice.dim() as u64,
        params.lattice.half_side() as u64,
        params.slices as u64,
        mc.thermalization,
        mc.measure_every,
        mc.chains as u64,
        mc.seed,
    ] {
        h.update(n.to_le_bytes());
    }
    h.update(mc.proposal_width.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(what.into())
}

fn eof(_: std::io::Error) -> Error {
    corrupt("unexpected end of data")
}

fn write_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    out.write_u64::<LE>(xs.len() as u64).unwrap();
    for &x in xs {
        out.write_f64::<LE>(x).unwrap();
    }
}

fn read_f64s(cur: &mut Cursor<&[u8]>, expected: Option<usize>) -> Result<Vec<f64>> {
    let n = cur.read_u64::<LE>().map_err(eof)? as usize;
    if let Some(e) = expected {
        if n != e {
            return Err(corrupt(format!("array of length {n}, expected {e}")));
        }
    }
    let remaining = cur.get_ref().len() as u64 - cur.position();
    if n as u64 * 8 > remaining {
        return Err(corrupt("array runs past end of data"));
    }
    (0..n).map(|_| cur.read_f64::<LE>().map_err(eof)).collect()
}

fn write_stats(out: &mut Vec<u8>, s: &SweepStats) {
    for v in [s.local_accepted, s.local_proposed, s.shift_accepted, s.shift_proposed] {
        out.write_u64::<LE>(v).unwrap();
    }
}

fn read_stats(cur: &mut Cursor<&[u8]>) -> Result<SweepStats> {
    Ok(SweepStats {
        local_accepted: cur.read_u64::<LE>().map_err(eof)?,
        local_proposed: cur.read_u64::<LE>().map_err(eof)?,
        shift_accepted: cur.read_u64::<LE>().map_err(eof)?,
        shift_proposed: cur.read_u64::<LE>().map_err(eof)?,
    })
}

fn write_blocking(out: &mut Vec<u8>, b: &Blocking) {
    out.write_u64::<LE>(b.dim() as u64).unwrap();
    out.write_u64::<LE>(b.levels().len() as u64).unwrap();
    for lv in b.levels() {
        out.write_u64::<LE>(lv.count).unwrap();
        write_f64s(out, &lv.sum);
        write_f64s(out, &lv.sumsq);
        match &lv.pending {
            None => out.write_u8(0).unwrap(),
            Some(p) => {
                out.write_u8(1).unwrap();
                write_f64s(out, p);
            }
        }
    }
}

fn read_blocking(cur: &mut Cursor<&[u8]>, dim: usize) -> Result<Blocking> {
    let found = cur.read_u64::<LE>().map_err(eof)? as usize;
    if found != dim {
        return Err(corrupt(format!("accumulator of dimension {found}, expected {dim}")));
    }
    let n_levels = cur.read_u64::<LE>().map_err(eof)? as usize;
    if n_levels > 128 {
        return Err(corrupt("implausible number of blocking levels"));
    }
    let mut levels = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let count = cur.read_u64::<LE>().map_err(eof)?;
        let sum = read_f64s(cur, Some(dim))?;
        let sumsq = read_f64s(cur, Some(dim))?;
        let pending = match cur.read_u8().map_err(eof)? {
            0 => None,
            1 => Some(read_f64s(cur, Some(dim))?),
            _ => return Err(corrupt("bad pending flag")),
        };
        levels.push(Level {
            count,
            sum,
            sumsq,
            pending,
        });
    }
    Ok(Blocking::from_levels(dim, levels))
}

fn write_chain(out: &mut Vec<u8>, c: &Chain) {
    out.write_u64::<LE>(c.index as u64).unwrap();
    out.write_u64::<LE>(c.sweeps_done).unwrap();
    out.write_f64::<LE>(c.widths.local).unwrap();
    out.write_f64::<LE>(c.widths.shift).unwrap();
    write_stats(out, &c.window);
    write_stats(out, &c.totals);
    out.write_all(&c.rng.get_seed()).unwrap();
    out.write_u64::<LE>(c.rng.get_stream()).unwrap();
    out.write_u128::<LE>(c.rng.get_word_pos()).unwrap();
    write_f64s(out, c.cfg.values());

    let a = &c.acc;
    write_blocking(out, &a.scalars);
    write_blocking(out, &a.site_means);
    write_blocking(out, &a.duhamel);
    write_blocking(out, &a.duhamel_hat);
    write_blocking(out, &a.gamma_local);
    write_f64s(out, &a.gamma_sum);

    out.write_u64::<LE>(c.log.len() as u64).unwrap();
    for row in &c.log {
        out.write_u64::<LE>(row.chain as u64).unwrap();
        out.write_u64::<LE>(row.sweep).unwrap();
        out.write_f64::<LE>(row.polarization).unwrap();
        out.write_f64::<LE>(row.action).unwrap();
    }
}

fn read_chain(cur: &mut Cursor<&[u8]>, params: &ModelParams) -> Result<Chain> {
    let n_sites = params.lattice.n_sites();
    let slices = params.slices;
    let index = cur.read_u64::<LE>().map_err(eof)? as usize;
    let sweeps_done = cur.read_u64::<LE>().map_err(eof)?;
    let widths = Widths {
        local: cur.read_f64::<LE>().map_err(eof)?,
        shift: cur.read_f64::<LE>().map_err(eof)?,
    };
    let window = read_stats(cur)?;
    let totals = read_stats(cur)?;
    let mut seed = [0u8; 32];
    cur.read_exact(&mut seed).map_err(eof)?;
    let stream = cur.read_u64::<LE>().map_err(eof)?;
    let word_pos = cur.read_u128::<LE>().map_err(eof)?;
    let mut rng: ChaCha8Rng = rand::SeedableRng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let values = read_f64s(cur, Some(n_sites * slices))?;
    let cfg = PathConfig::from_values(n_sites, slices, values)
        .map_err(|_| corrupt("non-finite path value"))?;

    let mut acc = ObservableAccumulator::new(n_sites, slices);
    acc.scalars = read_blocking(cur, acc.scalars.dim())?;
    acc.site_means = read_blocking(cur, n_sites)?;
    acc.duhamel = read_blocking(cur, n_sites)?;
    acc.duhamel_hat = read_blocking(cur, n_sites)?;
    acc.gamma_local = read_blocking(cur, slices)?;
    acc.gamma_sum = read_f64s(cur, Some(n_sites * slices))?;

    let n_rows = cur.read_u64::<LE>().map_err(eof)?;
    let remaining = cur.get_ref().len() as u64 - cur.position();
    if n_rows.saturating_mul(32) > remaining {
        return Err(corrupt("log runs past end of data"));
    }
    let mut log = Vec::with_capacity(n_rows as usize);
    for _ in 0..n_rows {
        log.push(LogRow {
            chain: cur.read_u64::<LE>().map_err(eof)? as usize,
            sweep: cur.read_u64::<LE>().map_err(eof)?,
            polarization: cur.read_f64::<LE>().map_err(eof)?,
            action: cur.read_f64::<LE>().map_err(eof)?,
        });
    }
    Ok(Chain {
        index,
        sweeps_done,
        widths,
        window,
        totals,
        rng,
        cfg,
        acc,
        log,
    })
}

impl Simulation {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LE>(CHECKPOINT_VERSION).unwrap();
        out.write_u64::<LE>(params_hash(&self.params, &self.mc)).unwrap();
        out.write_u8(self.record_log as u8).unwrap();
        out.write_u64::<LE>(self.chains.len() as u64).unwrap();
        for chain in &self.chains {
            write_chain(&mut out, chain);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Restores a run. `params` and `mc` must match those of the saved run
    /// apart from the sweep budget.
    pub fn from_bytes(bytes: &[u8], params: &ModelParams, mc: &McParams) -> Result<Self> {
        params.validate()?;
        mc.validate()?;
        if bytes.len() < MAGIC.len() + 4 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if bytes.len() < 12 + DIGEST_LEN {
            return Err(corrupt("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut cur = Cursor::new(body);
        cur.set_position(12);
        let hash = cur.read_u64::<LE>().map_err(eof)?;
        if hash != params_hash(params, mc) {
            return Err(Error::ParamsMismatch);
        }
        let record_log = cur.read_u8().map_err(eof)? != 0;
        let n_chains = cur.read_u64::<LE>().map_err(eof)? as usize;
        if n_chains != mc.chains {
            return Err(corrupt(format!("{n_chains} chains, expected {}", mc.chains)));
        }
        let chains = (0..n_chains)
            .map(|_| read_chain(&mut cur, params))
            .collect::<Result<Vec<_>>>()?;
        if cur.position() != body.len() as u64 {
            return Err(corrupt("trailing data"));
        }
        Ok(Self {
            params: params.clone(),
            mc: mc.clone(),
            chains,
            record_log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        file.sync_all()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, params: &ModelParams, mc: &McParams) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, params, mc)
    }
}
