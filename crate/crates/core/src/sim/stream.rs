//! Spawn events and the recorded spawn-stream file.
//!
//! A stream file is a header followed by fixed-size records, little-endian:
//!
//! ```text
//! magic      4 bytes  "TSPN"
//! version    u32      = 1
//! n_sources  u32
//! n_records  u64
//! records:   step u32, source u32, angle f64, speed f64
//! ```
//!
//! Records are ordered by step, then by source index, then by draw order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Source;
use crate::sim::rng::{stream_rng, SPAWN_STREAM_BASE};

pub const MAGIC: &[u8; 4] = b"TSPN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("i/o error on spawn stream: {0}")]
    Io(#[from] io::Error),
    #[error("not a spawn stream (bad magic)")]
    BadMagic,
    #[error("unsupported spawn stream version {0}")]
    Version(u32),
    #[error("spawn stream was recorded for {found} sources, scenario has {expected}")]
    SourceCount { expected: usize, found: usize },
    #[error("corrupt spawn stream: {0}")]
    Corrupt(String),
}

/// One target leaving a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpawnEvent {
    pub step: u32,
    pub source: u32,
    /// Takeoff angle in the source frame, `[0, π]`.
    pub angle: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpawnStream {
    pub n_sources: usize,
    pub events: Vec<SpawnEvent>,
}

impl SpawnStream {
    pub fn new(n_sources: usize) -> Self {
        Self {
            n_sources,
            events: Vec::new(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.n_sources as u32)?;
        w.write_u64::<LE>(self.events.len() as u64)?;
        for e in &self.events {
            w.write_u32::<LE>(e.step)?;
            w.write_u32::<LE>(e.source)?;
            w.write_f64::<LE>(e.angle)?;
            w.write_f64::<LE>(e.speed)?;
        }
        w.flush()
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, StreamError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(StreamError::BadMagic);
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(StreamError::Version(version));
        }
        let n_sources = r.read_u32::<LE>()? as usize;
        let n = r.read_u64::<LE>()? as usize;
        let mut events = Vec::with_capacity(n.min(1 << 20));
        let mut last = (0u32, 0u32);
        for i in 0..n {
            let e = SpawnEvent {
                step: r.read_u32::<LE>()?,
                source: r.read_u32::<LE>()?,
                angle: r.read_f64::<LE>()?,
                speed: r.read_f64::<LE>()?,
            };
            if e.source as usize >= n_sources {
                return Err(StreamError::Corrupt(format!(
                    "record {i} names source {} of {n_sources}",
                    e.source
                )));
            }
            if (e.step, e.source) < last {
                return Err(StreamError::Corrupt(format!("record {i} is out of order")));
            }
            last = (e.step, e.source);
            events.push(e);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(StreamError::Corrupt(format!(
                "{} trailing bytes",
                rest.len()
            )));
        }
        Ok(Self { n_sources, events })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, StreamError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    /// SHA-256 of the serialised stream.
    pub fn checksum(&self) -> String {
        let mut buf = Vec::with_capacity(20 + 24 * self.events.len());
        self.write(&mut buf).expect("write to memory");
        hex::encode(Sha256::digest(&buf))
    }
}

/// Draws a Poisson count by inverse-transform sampling.
pub fn poisson_inverse<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u32 {
    if !(rate > 0.0) {
        return 0;
    }
    let u: f64 = rng.random();
    let mut k = 0u32;
    let mut p = (-rate).exp();
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

/// Fresh Poisson spawns: one independent generator stream per source.
#[derive(Debug, Clone)]
pub struct SpawnGenerator {
    rngs: Vec<ChaCha8Rng>,
    speed: f64,
}

impl SpawnGenerator {
    pub fn new(seed: u64, n_sources: usize, speed: f64) -> Self {
        let rngs = (0..n_sources)
            .map(|j| stream_rng(seed, SPAWN_STREAM_BASE + j as u64))
            .collect();
        Self { rngs, speed }
    }

    /// Per source, draws a Poisson(rate) count and a uniform `[0, π]`
    /// takeoff angle for each new target.
    pub fn draw(&mut self, step: u32, sources: &[Source], out: &mut Vec<SpawnEvent>) {
        for (j, (src, rng)) in sources.iter().zip(self.rngs.iter_mut()).enumerate() {
            let k = poisson_inverse(src.rate, rng);
            for _ in 0..k {
                let angle = rng.random::<f64>() * std::f64::consts::PI;
                out.push(SpawnEvent {
                    step,
                    source: j as u32,
                    angle,
                    speed: self.speed,
                });
            }
        }
    }
}

/// Where a run's spawn events come from.
pub(crate) enum SpawnFeed<'a> {
    Poisson(SpawnGenerator),
    Replay {
        events: &'a [SpawnEvent],
        cursor: usize,
    },
}

impl<'a> SpawnFeed<'a> {
    pub(crate) fn replay(stream: &'a SpawnStream) -> Self {
        SpawnFeed::Replay {
            events: &stream.events,
            cursor: 0,
        }
    }

    pub(crate) fn events_for(&mut self, step: u32, sources: &[Source], out: &mut Vec<SpawnEvent>) {
        out.clear();
        match self {
            SpawnFeed::Poisson(generator) => generator.draw(step, sources, out),
            SpawnFeed::Replay { events, cursor } => {
                while *cursor < events.len() && events[*cursor].step < step {
                    *cursor += 1;
                }
                while *cursor < events.len() && events[*cursor].step == step {
                    out.push(events[*cursor]);
                    *cursor += 1;
                }
            }
        }
    }
}
