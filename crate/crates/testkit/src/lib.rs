//! Shared test support: seeded random generators, reference oracles that
//! re-derive expected results without going through the code under test,
//! and in-process mock HTTP servers.

pub mod fixtures;
pub mod harness;
pub mod merge;
pub mod mock;
pub mod pattern;
pub mod selector;
pub mod template;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand::Rng;

/// Deterministic RNG for reproducible case generation.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of a randomized batch: cases run and cases that disagreed.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub cases: usize,
    pub failures: Vec<String>,
}

impl Tally {
    pub fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.failures.len() < 5 {
            self.failures.push(describe());
        } else if !ok {
            self.failures.push(String::new());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let shown: Vec<&str> = self.failures.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
        format!(
            "{}/{} cases agree{}",
            self.cases - self.failures.len(),
            self.cases,
            if shown.is_empty() { String::new() } else { format!("; first failures: {}", shown.join(" | ")) }
        )
    }
}
