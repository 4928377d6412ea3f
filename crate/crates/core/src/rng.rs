//! Reproducible random streams.
//!
//! Every stream is addressed by a [`StreamKey`]. The master seed is expanded
//! into a ChaCha key and the remaining fields are hashed into the ChaCha
//! stream id, so a handle depends only on its key and never on the order in
//! which replications are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::normal::quantile_unchecked;

/// What a stream is used for inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    Path,
    Coupling,
    Auxiliary,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Path => 0x7061_7468,
            StreamRole::Coupling => 0x636f_7570,
            StreamRole::Auxiliary => 0x6175_7869,
        }
    }
}

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub experiment_id: u64,
    pub replication_index: u64,
    pub stream_role: StreamRole,
}

impl StreamKey {
    pub fn new(master_seed: u64, experiment_id: u64, replication_index: u64, role: StreamRole) -> Self {
        StreamKey {
            master_seed,
            experiment_id,
            replication_index,
            stream_role: role,
        }
    }

    /// Same key with a different role.
    pub fn with_role(self, role: StreamRole) -> Self {
        StreamKey {
            stream_role: role,
            ..self
        }
    }

    pub fn with_replication(self, replication_index: u64) -> Self {
        StreamKey {
            replication_index,
            ..self
        }
    }
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of several words into one.
pub fn combine(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243f_6a88_85a3_08d3_u64, |h, &w| mix64(h ^ mix64(w)))
}

/// A single-threaded generator of uniform words, uniforms and normals.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

impl Stream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * INV_2_53
    }

    /// Standard normal draw by inversion of one 53-bit uniform.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        quantile_unchecked(self.uniform())
    }
}

/// Deterministically derives the stream addressed by `key`.
pub fn derive_stream(key: StreamKey) -> Stream {
    let mut seed = [0u8; 32];
    let mut state = mix64(key.master_seed ^ 0x5eed_5eed_5eed_5eed);
    for chunk in seed.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(combine(&[
        key.experiment_id,
        key.replication_index,
        key.stream_role.tag(),
    ]));
    Stream { rng }
}

/// Convenience for [`Stream::standard_normal`].
#[inline]
pub fn standard_normal(stream: &mut Stream) -> f64 {
    stream.standard_normal()
}
