//! Binary spike trains and their bit-packed file container.

use std::path::Path;

use nalgebra::DMatrix;

use crate::codec::{write_file, Decoder, Encoder};
use crate::error::{Error, Result};

const SPIKES_MAGIC: &[u8; 4] = b"SHDS";
const SPIKES_VERSION: u32 = 1;

/// `T × n` binary event tensor, stored bit-packed row-major by time
/// (bit `t·n + j`, least significant bit first within each byte).
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    steps: usize,
    channels: usize,
    dt: f64,
    bits: Vec<u8>,
}

impl SpikeTrain {
    pub fn silent(steps: usize, channels: usize) -> Self {
        Self {
            steps,
            channels,
            dt: 1.0,
            bits: vec![0; (steps * channels).div_ceil(8)],
        }
    }

    /// Builds a train from time-major rows of booleans.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        let mut train = Self::silent(rows.len(), channels);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != channels {
                return Err(Error::Shape {
                    expected: channels,
                    actual: row.len(),
                    context: "spike train row",
                });
            }
            for (j, &s) in row.iter().enumerate() {
                train.set(t, j, s);
            }
        }
        Ok(train)
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn get(&self, t: usize, j: usize) -> bool {
        let i = t * self.channels + j;
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, t: usize, j: usize, spike: bool) {
        let i = t * self.channels + j;
        if spike {
            self.bits[i / 8] |= 1 << (i % 8);
        } else {
            self.bits[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn row(&self, t: usize) -> Vec<bool> {
        (0..self.channels).map(|j| self.get(t, j)).collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Copy of time steps `range`.
    pub fn slice(&self, start: usize, end: usize) -> SpikeTrain {
        let mut out = SpikeTrain::silent(end - start, self.channels).with_dt(self.dt);
        for t in start..end {
            for j in 0..self.channels {
                if self.get(t, j) {
                    out.set(t - start, j, true);
                }
            }
        }
        out
    }

    /// `n × T` matrix of 0/1 values, one column per time step.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.channels, self.steps);
        for t in 0..self.steps {
            for j in 0..self.channels {
                if self.get(t, j) {
                    m[(j, t)] = 1.0;
                }
            }
        }
        m
    }

    /// Layout: `"SHDS"`, `u32` version, `u64 T`, `u64 n`, `f64 dt`, then
    /// `⌈T·n/8⌉` packed bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(SPIKES_MAGIC, SPIKES_VERSION);
        enc.u64(self.steps as u64)
            .u64(self.channels as u64)
            .f64(self.dt);
        let mut out = enc.finish();
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, SPIKES_MAGIC, SPIKES_VERSION)?;
        let steps = dec.usize()?;
        let channels = dec.usize()?;
        let dt = dec.f64()?;
        let n = steps
            .checked_mul(channels)
            .ok_or_else(|| Error::Format("spike train size overflow".into()))?;
        let bits = dec.bytes(n.div_ceil(8))?;
        dec.finish()?;
        Ok(Self {
            steps,
            channels,
            dt,
            bits,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
