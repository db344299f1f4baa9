//! Engine/query rotation.
//!
//! An agent shifts engine and query together after every routine, so the k-th
//! routine of an agent that starts at engine `s` uses engine `(s + k) mod E`
//! and query `k mod Q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoutinePair {
    pub engine: usize,
    pub query: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationSchedule {
    pub pairs: Vec<RoutinePair>,
    pub start_offset: usize,
}

impl RotationSchedule {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RoutinePair> {
        self.pairs.iter()
    }
}

/// Pair followed by routine `k` of an agent starting at engine `start_offset`.
///
/// Defined for every `k`, so an agent left running past its schedule keeps
/// cycling through the query list.
pub fn pair_at(engines: usize, queries: usize, start_offset: usize, k: usize) -> RoutinePair {
    RoutinePair {
        engine: (start_offset + k) % engines,
        query: k % queries,
    }
}

pub fn rotation_schedule(
    engines: usize,
    queries: usize,
    iterations: usize,
    start_offset: usize,
) -> Result<RotationSchedule> {
    if engines == 0 || queries == 0 {
        return Err(Error::InvalidArgument(
            "rotation needs at least one engine and one query".into(),
        ));
    }
    if start_offset >= engines {
        return Err(Error::InvalidArgument(format!(
            "start offset {start_offset} out of range for {engines} engines"
        )));
    }
    let pairs = (0..queries * iterations)
        .map(|k| pair_at(engines, queries, start_offset, k))
        .collect();
    Ok(RotationSchedule {
        pairs,
        start_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn p(engine: usize, query: usize) -> RoutinePair {
        RoutinePair { engine, query }
    }

    #[test]
    fn two_engines_four_queries() {
        let s = rotation_schedule(2, 4, 1, 0).unwrap();
        assert_eq!(s.pairs, vec![p(0, 0), p(1, 1), p(0, 2), p(1, 3)]);
        for excluded in [p(1, 0), p(0, 1), p(1, 2), p(0, 3)] {
            assert!(!s.pairs.contains(&excluded));
        }
    }

    #[test]
    fn single_engine() {
        let s = rotation_schedule(1, 3, 1, 0).unwrap();
        assert_eq!(s.pairs, vec![p(0, 0), p(0, 1), p(0, 2)]);
    }

    #[test]
    fn three_engines_two_iterations_offset_one() {
        // Enumerated by hand: engines (1+k) mod 3 = 1,2,0,1; queries k mod 2 = 0,1,0,1.
        let s = rotation_schedule(3, 2, 2, 1).unwrap();
        assert_eq!(s.pairs, vec![p(1, 0), p(2, 1), p(0, 0), p(1, 1)]);
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn offset_out_of_range() {
        assert!(rotation_schedule(2, 4, 1, 2).is_err());
        assert!(rotation_schedule(0, 4, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn union_over_offsets_covers_every_pair(e in 1usize..8, q in 1usize..12) {
            let mut seen = BTreeSet::new();
            let mut total = 0;
            for s in 0..e {
                for pair in rotation_schedule(e, q, 1, s).unwrap().pairs {
                    seen.insert(pair);
                    total += 1;
                }
            }
            // Each (engine, query) exactly once: E*Q distinct of E*Q drawn.
            prop_assert_eq!(total, e * q);
            prop_assert_eq!(seen.len(), e * q);
        }

        #[test]
        fn length_is_queries_times_iterations(e in 1usize..8, q in 1usize..12, it in 1usize..5, s in 0usize..8) {
            prop_assume!(s < e);
            let sched = rotation_schedule(e, q, it, s).unwrap();
            prop_assert_eq!(sched.len(), q * it);
            for (k, pair) in sched.pairs.iter().enumerate() {
                prop_assert_eq!(*pair, p((s + k) % e, k % q));
            }
        }
    }
}
