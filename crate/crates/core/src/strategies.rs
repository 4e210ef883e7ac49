//! Deterministic local response functions `D_λ(a|x)` and the hemisphere pruning
//! of the projective-qubit strategy space.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::BlochVector;

pub const DEFAULT_STRATEGY_CAP: usize = 1 << 20;
pub const DEFAULT_PRUNE_SAMPLES: usize = 1_000_000;

const CHUNK: usize = 1 << 16;

/// Outcome `assignment[x]` for every measurement `x`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeterministicStrategy {
    pub assignment: Vec<u8>,
}

impl DeterministicStrategy {
    pub fn outcome(&self, x: usize) -> usize {
        self.assignment[x] as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategySet {
    m: usize,
    k: usize,
    strategies: Vec<DeterministicStrategy>,
    complete: bool,
}

impl StrategySet {
    /// Sorted and deduplicated; `complete` is only accepted when all `k^m`
    /// strategies are present.
    pub fn new(m: usize, k: usize, strategies: Vec<DeterministicStrategy>, complete: bool) -> Result<Self> {
        if k < 1 || k > u8::MAX as usize + 1 {
            return Err(Error::Parameter(format!("unsupported outcome count {k}")));
        }
        for s in &strategies {
            if s.assignment.len() != m || s.assignment.iter().any(|&a| a as usize >= k) {
                return Err(Error::Parameter("strategy does not match (m, k)".into()));
            }
        }
        let set: BTreeSet<_> = strategies.into_iter().collect();
        let strategies: Vec<_> = set.into_iter().collect();
        if complete && (strategies.len() as f64) != (k as f64).powi(m as i32) {
            return Err(Error::Parameter("complete flag on a partial strategy list".into()));
        }
        Ok(Self { m, k, strategies, complete })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn strategies(&self) -> &[DeterministicStrategy] {
        &self.strategies
    }

    pub fn get(&self, i: usize) -> &DeterministicStrategy {
        &self.strategies[i]
    }

    pub fn contains(&self, s: &DeterministicStrategy) -> bool {
        self.strategies.binary_search(s).is_ok()
    }

    pub fn to_doc(&self) -> StrategySetDoc {
        StrategySetDoc {
            m: self.m,
            k: self.k,
            complete: self.complete,
            assignments: self.strategies.iter().flat_map(|s| s.assignment.iter().copied()).collect(),
        }
    }

    pub fn from_doc(doc: &StrategySetDoc) -> Result<Self> {
        if doc.m == 0 || doc.assignments.len() % doc.m != 0 {
            return Err(Error::Parameter("packed strategy array length is not a multiple of m".into()));
        }
        let strategies = doc
            .assignments
            .chunks(doc.m)
            .map(|c| DeterministicStrategy { assignment: c.to_vec() })
            .collect::<Vec<_>>();
        let n = strategies.len();
        let set = Self::new(doc.m, doc.k, strategies, doc.complete)?;
        if set.len() != n {
            return Err(Error::Parameter("duplicate strategies in document".into()));
        }
        Ok(set)
    }
}

/// Serialized form: `assignments` holds the outcome of every strategy packed
/// row after row (`len = N·m`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySetDoc {
    pub m: usize,
    pub k: usize,
    pub complete: bool,
    pub assignments: Vec<u8>,
}

/// All `k^m` strategies in lexicographic order.
pub fn enumerate_all(m: usize, k: usize, cap: usize) -> Result<StrategySet> {
    let count = (k as f64).powi(m as i32);
    if count > cap as f64 {
        return Err(Error::StrategyCap { count, cap });
    }
    let n = count as usize;
    let strategies = (0..n)
        .map(|mut idx| {
            let mut a = vec![0u8; m];
            for x in (0..m).rev() {
                a[x] = (idx % k) as u8;
                idx /= k;
            }
            DeterministicStrategy { assignment: a }
        })
        .collect();
    StrategySet::new(m, k, strategies, true)
}

/// Strategies `a_x = [v̂_x·λ̂ < 0]` induced by uniformly sampled hidden
/// directions `λ̂` (outcome 0 is the `+v̂_x` side). Samples are drawn in fixed
/// chunks, chunk `c` using stream `c` of a ChaCha generator seeded with `seed`,
/// so the result does not depend on the thread count.
pub fn prune_hemisphere(directions: &[BlochVector<f64>], samples: usize, seed: u64) -> Result<StrategySet> {
    if directions.is_empty() {
        return Err(Error::Parameter("no measurement directions".into()));
    }
    let chunks = samples.div_ceil(CHUNK);
    let patterns: BTreeSet<Vec<u8>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut found = BTreeSet::new();
            let mut pattern = vec![0u8; directions.len()];
            for _ in 0..n {
                'draw: loop {
                    let lam = uniform_direction(&mut rng);
                    for (x, d) in directions.iter().enumerate() {
                        let s = d.dot(lam);
                        if s.abs() < 1e-12 {
                            continue 'draw;
                        }
                        pattern[x] = u8::from(s < 0.0);
                    }
                    break;
                }
                if !found.contains(&pattern) {
                    found.insert(pattern.clone());
                }
            }
            found
        })
        .reduce(BTreeSet::new, |mut a, b| {
            a.extend(b);
            a
        });
    let strategies = patterns.into_iter().map(|assignment| DeterministicStrategy { assignment }).collect();
    StrategySet::new(directions.len(), 2, strategies, false)
}

fn uniform_direction(rng: &mut ChaCha8Rng) -> BlochVector<f64> {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    BlochVector::new(r * phi.cos(), r * phi.sin(), z)
}

/// `D(a|x)` of strategy `s`.
pub fn strategy_value(s: &DeterministicStrategy, x: usize, a: usize) -> Result<u8> {
    let out = *s
        .assignment
        .get(x)
        .ok_or_else(|| Error::Parameter(format!("measurement index {x} out of range")))?;
    Ok(u8::from(out as usize == a))
}
