//! The static world a simulation runs in: lattice, sources, target speed and
//! the quadrature settings used to build per-cell statistics.

use sha2::{Digest, Sha256};

use crate::geometry::{Facing, Lattice, Source};

/// Parameters of the escape-time quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureParams {
    /// Takeoff angles sampled per (cell, source) pair.
    pub quadrature_n: usize,
    /// Width of the uniform CDF bins, in time-steps.
    pub bin_width: f64,
    /// Bins holding more probability than this are split at sample
    /// quantiles so linear interpolation stays within this of the samples.
    pub max_bin_mass: f64,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            quadrature_n: 4096,
            bin_width: 0.1,
            max_bin_mass: 1.0 / 256.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.short())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub lattice: Lattice,
    pub sources: Vec<Source>,
    /// Uniform target speed, length units per step.
    pub target_speed: f64,
    pub quadrature: QuadratureParams,
}

impl Scenario {
    /// Hash of everything the statistics table depends on.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Sha256::new();
        h.update(b"tstep-scenario-v1");
        let mut f = |v: f64| h.update(v.to_bits().to_le_bytes());
        let z = self.lattice.zone();
        f(z.origin.x);
        f(z.origin.y);
        f(z.width);
        f(z.height);
        f(self.lattice.cell_size());
        f(self.lattice.fov_side());
        f(self.target_speed);
        f(self.quadrature.bin_width);
        f(self.quadrature.max_bin_mass);
        h.update((self.quadrature.quadrature_n as u64).to_le_bytes());
        h.update((self.sources.len() as u64).to_le_bytes());
        for s in &self.sources {
            h.update(s.position.x.to_bits().to_le_bytes());
            h.update(s.position.y.to_bits().to_le_bytes());
            h.update(s.rate.to_bits().to_le_bytes());
            h.update([match s.facing {
                Facing::North => 0u8,
                Facing::South => 1,
                Facing::East => 2,
                Facing::West => 3,
            }]);
        }
        Fingerprint(h.finalize().into())
    }
}
