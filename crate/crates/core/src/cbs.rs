//! Candidate broker selection: randomized top-k selection per request and
//! the lossless pruning of the broker side that it enables.
//!
//! For a batch of `|R|` requests, some optimal matching uses only brokers
//! that rank within the top `|R|` of at least one request. Keeping the union
//! of those candidate sets shrinks the graph to at most `|R|^2` brokers
//! without changing the optimal value.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{BrokerId, RequestId};

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub request: RequestId,
    /// Selected brokers, best first.
    pub brokers: Vec<BrokerId>,
}

/// Comparison counters from one selection, for complexity checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelectStats {
    pub comparisons: u64,
    pub rounds: u64,
}

/// Strict total order: larger utility first, then lower broker id.
fn ranks_before<T: PartialOrd>(a: &(BrokerId, T), b: &(BrokerId, T)) -> bool {
    match a.1.partial_cmp(&b.1) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => a.0 < b.0,
    }
}

/// Generator stream for one request, derived from the run seed.
pub fn request_rng(seed: u64, request: RequestId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(request.0 as u64 + 1);
    rng
}

/// Returns the `min(k, |B|)` brokers with the largest utility for one
/// request. Pivots are drawn from `rng`.
pub fn select_candidates<T, R>(request: RequestId, k: usize, utilities: &[(BrokerId, T)], rng: &mut R) -> CandidateSet
where
    T: PartialOrd + Copy,
    R: Rng + ?Sized,
{
    select_candidates_with_stats(request, k, utilities, rng).0
}

pub fn select_candidates_with_stats<T, R>(
    request: RequestId,
    k: usize,
    utilities: &[(BrokerId, T)],
    rng: &mut R,
) -> (CandidateSet, SelectStats)
where
    T: PartialOrd + Copy,
    R: Rng + ?Sized,
{
    assert!(k >= 1, "candidate size must be at least 1");
    let mut stats = SelectStats::default();
    let mut pool: Vec<(BrokerId, T)> = utilities.to_vec();
    let mut chosen: Vec<(BrokerId, T)> = Vec::with_capacity(k.min(pool.len()));
    let mut need = k;

    loop {
        if pool.len() <= need {
            chosen.append(&mut pool);
            break;
        }
        stats.rounds += 1;
        let pivot = pool[rng.random_range(0..pool.len())];
        // Partition into those ranking at or above the pivot and the rest.
        let mut upper = Vec::with_capacity(pool.len() / 2 + 1);
        let mut lower = Vec::with_capacity(pool.len() / 2 + 1);
        for item in pool.drain(..) {
            stats.comparisons += 1;
            if item.0 == pivot.0 || ranks_before(&item, &pivot) {
                upper.push(item);
            } else {
                lower.push(item);
            }
        }
        if upper.len() >= need {
            pool = upper;
        } else {
            need -= upper.len();
            chosen.append(&mut upper);
            pool = lower;
        }
    }

    chosen.sort_by(|a, b| if ranks_before(a, b) { Ordering::Less } else { Ordering::Greater });
    (
        CandidateSet {
            request,
            brokers: chosen.into_iter().map(|(b, _)| b).collect(),
        },
        stats,
    )
}

/// Union over requests of each request's top-`|R|` brokers among
/// `brokers`, sorted by broker id. `utility(r, b)` gives the (refined)
/// weight the matching will use; `None` marks a forbidden pair.
pub fn prune_brokers<T, F>(requests: &[RequestId], brokers: &[BrokerId], mut utility: F, seed: u64) -> Vec<BrokerId>
where
    T: PartialOrd + Copy,
    F: FnMut(RequestId, BrokerId) -> Option<T>,
{
    let k = requests.len();
    if k == 0 {
        return Vec::new();
    }
    if brokers.len() <= k {
        return brokers.to_vec();
    }
    let mut keep = std::collections::BTreeSet::new();
    let mut row = Vec::with_capacity(brokers.len());
    for &r in requests {
        row.clear();
        row.extend(brokers.iter().filter_map(|&b| utility(r, b).map(|u| (b, u))));
        let mut rng = request_rng(seed, r);
        keep.extend(select_candidates(r, k, &row, &mut rng).brokers);
    }
    keep.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<BrokerId> {
        v.iter().map(|&i| BrokerId(i)).collect()
    }

    #[test]
    fn small_pool_returned_whole() {
        let u = vec![(BrokerId(0), 0.3), (BrokerId(1), 0.6)];
        let c = select_candidates(RequestId(0), 5, &u, &mut request_rng(1, RequestId(0)));
        assert_eq!(c.brokers, ids(&[1, 0]));
    }

    #[test]
    fn top_two_by_inspection() {
        // a..e = 0..4
        let u = vec![
            (BrokerId(0), 0.9),
            (BrokerId(1), 0.1),
            (BrokerId(2), 0.5),
            (BrokerId(3), 0.7),
            (BrokerId(4), 0.3),
        ];
        let c = select_candidates(RequestId(0), 2, &u, &mut request_rng(3, RequestId(0)));
        assert_eq!(c.brokers, ids(&[0, 3]));
    }

    #[test]
    fn ties_broken_by_lower_id() {
        let u: Vec<_> = (0..10).map(|i| (BrokerId(i), 0.5)).collect();
        for seed in 0..20 {
            let c = select_candidates(RequestId(0), 3, &u, &mut request_rng(seed, RequestId(0)));
            assert_eq!(c.brokers, ids(&[0, 1, 2]));
        }
    }

    #[test]
    fn thousand_utilities_match_sort_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let u: Vec<_> = (0..1000).map(|i| (BrokerId(i), rng.random::<f64>())).collect();
        let c = select_candidates(RequestId(0), 50, &u, &mut rng);
        let mut sorted = u.clone();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let oracle: Vec<_> = sorted[..50].iter().map(|x| x.0).collect();
        assert_eq!(c.brokers, oracle);
    }

    #[test]
    fn single_request_keeps_top_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let brokers: Vec<_> = (0..100).map(BrokerId).collect();
        let u: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let best = (0..100).max_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap()).unwrap();
        let kept = prune_brokers(&[RequestId(0)], &brokers, |_, b| Some(u[b.0 as usize]), 9);
        assert_eq!(kept, vec![BrokerId(best as u32)]);
    }

    #[test]
    fn nothing_to_prune_when_brokers_scarce() {
        let brokers: Vec<_> = (0..5).map(BrokerId).collect();
        let reqs: Vec<_> = (0..5).map(RequestId).collect();
        let kept = prune_brokers(&reqs, &brokers, |_, _| Some(0.1), 0);
        assert_eq!(kept, brokers);
    }

    #[test]
    fn forbidden_pairs_are_skipped() {
        let brokers: Vec<_> = (0..4).map(BrokerId).collect();
        let kept = prune_brokers(
            &[RequestId(0)],
            &brokers,
            |_, b| if b.0 == 3 { None } else { Some(b.0 as f64) },
            0,
        );
        assert_eq!(kept, ids(&[2]));
    }
}
