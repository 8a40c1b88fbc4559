//! Explicit, value-typed random state.
//!
//! Every stochastic operation takes an [`RngState`] and hands back the advanced
//! state. The state is a `(seed, counter)` pair over a ChaCha8 keystream, so a
//! given pair names the same draw sequence on every platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// Position in the keystream, in 32-bit words.
    pub counter: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DrawKind {
    Uniform01,
    StandardNormal,
    Bernoulli(f64),
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    /// Runs `f` against a generator positioned at this state and returns the
    /// advanced state alongside its result.
    pub fn with_rng<T>(self, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> (T, RngState) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.counter as u128);
        let out = f(&mut rng);
        let counter = rng.get_word_pos() as u64;
        (
            out,
            RngState {
                seed: self.seed,
                counter,
            },
        )
    }

    /// An independent state derived from this one (used to give sub-tasks
    /// their own streams without consuming the parent's).
    pub fn fork(self, tag: u64) -> RngState {
        let (seed, _) = self.with_rng(|r| r.next_u64());
        RngState::new(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn draw(self, kind: DrawKind, n: usize) -> Result<(Vec<f64>, RngState)> {
        if let DrawKind::Bernoulli(p) = kind {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain_err!("bernoulli probability {p} outside [0, 1]"));
            }
        }
        Ok(self.with_rng(|rng| match kind {
            DrawKind::Uniform01 => (0..n).map(|_| rng.random::<f64>()).collect(),
            DrawKind::StandardNormal => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
            DrawKind::Bernoulli(p) => (0..n)
                .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
                .collect(),
        }))
    }

    /// A uniformly random permutation of `0..n` (Fisher-Yates).
    pub fn permutation(self, n: usize) -> (Vec<usize>, RngState) {
        self.with_rng(|rng| {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            idx
        })
    }
}
