use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::mix_seed;
use crate::decoy::binary_entropy;
use crate::error::{Error, Result};

/// Variable-node degree distribution, as (degree, fraction of nodes) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeProfile {
    pub variable: Vec<(usize, f64)>,
}

impl Default for DegreeProfile {
    fn default() -> Self {
        DegreeProfile { variable: vec![(2, 0.17), (3, 0.60), (8, 0.10), (20, 0.13)] }
    }
}

impl DegreeProfile {
    pub fn regular(column_weight: usize) -> Self {
        DegreeProfile { variable: vec![(column_weight, 1.0)] }
    }

    /// Degrees for `n` variables, largest-remainder rounding of the fractions.
    fn assign(&self, n: usize) -> Vec<usize> {
        let total: f64 = self.variable.iter().map(|&(_, f)| f).sum();
        let mut counts: Vec<(usize, usize, f64)> = self
            .variable
            .iter()
            .map(|&(d, f)| {
                let exact = f / total * n as f64;
                (d, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = counts.iter().map(|c| c.1).sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2));
        for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
            counts[i].1 += 1;
        }
        let mut degrees: Vec<usize> = counts.iter().flat_map(|&(d, c, _)| std::iter::repeat_n(d, c)).collect();
        degrees.sort_unstable();
        degrees
    }
}

/// Sparse parity-check matrix stored check-major, with the transposed
/// variable-major index alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpcCode {
    n: usize,
    checks: Vec<Vec<u32>>,
    var_checks: Vec<Vec<u32>>,
    construction_seed: u64,
    code_id: u32,
}

impl LdpcCode {
    /// Builds a code from explicit check rows. Rows must be non-empty, in
    /// range and free of duplicates; low-degree variables are allowed here.
    pub fn from_checks(n: usize, checks: Vec<Vec<u32>>) -> Result<Self> {
        if checks.is_empty() || checks.len() >= n {
            return Err(Error::InvalidRate(format!("{} checks for {} variables", checks.len(), n)));
        }
        let mut var_checks = vec![Vec::new(); n];
        for (j, row) in checks.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::param("checks", format!("check {j} is empty")));
            }
            let mut sorted = row.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::param("checks", format!("check {j} repeats a variable")));
            }
            for &v in row {
                if v as usize >= n {
                    return Err(Error::param("checks", format!("check {j} references variable {v}")));
                }
                var_checks[v as usize].push(j as u32);
            }
        }
        let code_id = structure_id(n, &checks);
        Ok(LdpcCode { n, checks, var_checks, construction_seed: 0, code_id })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.checks.len()
    }

    pub fn rate(&self) -> f64 {
        1.0 - self.m() as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<u32>] {
        &self.checks
    }

    pub fn var_checks(&self) -> &[Vec<u32>] {
        &self.var_checks
    }

    pub fn column_weights(&self) -> Vec<usize> {
        self.var_checks.iter().map(Vec::len).collect()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.checks.iter().map(Vec::len).collect()
    }

    pub fn edges(&self) -> usize {
        self.checks.iter().map(Vec::len).sum()
    }

    pub fn construction_seed(&self) -> u64 {
        self.construction_seed
    }

    pub fn code_id(&self) -> u32 {
        self.code_id
    }

    pub fn parities(&self, bits: &[u8]) -> Result<Vec<u8>> {
        if bits.len() != self.n {
            return Err(Error::InvalidBlock { expected: self.n, got: bits.len() });
        }
        Ok(self
            .checks
            .iter()
            .map(|row| row.iter().fold(0u8, |acc, &v| acc ^ (bits[v as usize] & 1)))
            .collect())
    }

    /// Number of length-4 cycles (pairs of checks sharing two variables).
    pub fn four_cycles(&self) -> usize {
        let mut count = 0;
        let mut seen = vec![u32::MAX; self.m()];
        let mut hits = vec![0u32; self.m()];
        for (j, row) in self.checks.iter().enumerate() {
            for &v in row {
                for &k in &self.var_checks[v as usize] {
                    if k as usize <= j {
                        continue;
                    }
                    if seen[k as usize] != j as u32 {
                        seen[k as usize] = j as u32;
                        hits[k as usize] = 0;
                    }
                    hits[k as usize] += 1;
                    if hits[k as usize] == 2 {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

fn structure_id(n: usize, checks: &[Vec<u32>]) -> u32 {
    let mut h = mix_seed(n as u64, checks.len() as u64);
    for row in checks {
        for &v in row {
            h = mix_seed(h, v as u64 + 1);
        }
        h = mix_seed(h, u64::MAX);
    }
    (h ^ (h >> 32)) as u32
}

/// Builds a code of length `n` with `ceil(n f H2(target_qber))` checks using
/// the default degree profile.
pub fn generate_code(n: usize, target_qber: f64, safety_factor: f64, seed: u64) -> Result<LdpcCode> {
    generate_code_with_profile(n, target_qber, safety_factor, seed, &DegreeProfile::default())
}

/// Check count for a block of `n` bits at the given QBER and efficiency.
pub fn check_count(n: usize, target_qber: f64, safety_factor: f64) -> Result<usize> {
    if !(target_qber > 0.0 && target_qber < 0.11) {
        return Err(Error::InvalidRate(format!("target QBER {target_qber} outside (0, 0.11)")));
    }
    if !(safety_factor >= 1.0) {
        return Err(Error::InvalidRate(format!("efficiency factor {safety_factor} below 1")));
    }
    Ok((n as f64 * safety_factor * binary_entropy(target_qber)?).ceil() as usize)
}

/// Progressive edge growth restricted to distance-2 exclusion: each new edge
/// of a variable goes to a lowest-degree check that shares no variable with
/// the variable's existing checks, so no 4-cycles are created while such a
/// check exists.
pub fn generate_code_with_profile(
    n: usize,
    target_qber: f64,
    safety_factor: f64,
    seed: u64,
    profile: &DegreeProfile,
) -> Result<LdpcCode> {
    if n < 6 {
        return Err(Error::InvalidRate(format!("block length {n} below 6")));
    }
    let m = check_count(n, target_qber, safety_factor)?;
    if m >= n || m < 2 {
        return Err(Error::InvalidRate(format!("{m} checks for {n} variables")));
    }
    let degrees = profile.assign(n);
    if degrees.iter().any(|&d| d < 2 || d > m) {
        return Err(Error::InvalidRate("variable degrees must lie in [2, m]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x1d9c));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    // low degrees first, ties in random order
    order.sort_by_key(|&v| degrees[v]);

    let mut checks: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut var_checks: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut buckets = DegreeBuckets::new(m);
    let mut search = PegSearch::new(n, m);

    for &v in &order {
        for _ in 0..degrees[v] {
            let c = if var_checks[v].is_empty() {
                buckets.pick(&mut rng, |_| true)
            } else {
                let accept = search.farthest(v, &checks, &var_checks);
                buckets.pick(&mut rng, |c| accept(c))
            }
            .expect("fewer checks than variable degree");
            checks[c].push(v as u32);
            var_checks[v].push(c as u32);
            buckets.increment(c);
        }
    }
    for row in checks.iter_mut() {
        row.sort_unstable();
    }
    if checks.iter().any(Vec::is_empty) {
        return Err(Error::InvalidRate("construction left an empty check".into()));
    }
    let mut code = LdpcCode::from_checks(n, checks)?;
    code.construction_seed = seed;
    Ok(code)
}

/// Checks grouped by current degree for lowest-degree selection.
/// Check layers explored when placing an edge; depth 1 rules out 4-cycles.
const PEG_MAX_DEPTH: u32 = 1;

/// Breadth-first search state for progressive edge growth.
struct PegSearch {
    stamp: u32,
    check_seen: Vec<u32>,
    check_depth: Vec<u32>,
    var_seen: Vec<u32>,
    frontier: Vec<u32>,
    next: Vec<u32>,
}

impl PegSearch {
    fn new(n: usize, m: usize) -> Self {
        PegSearch {
            stamp: 0,
            check_seen: vec![0; m],
            check_depth: vec![0; m],
            var_seen: vec![0; n],
            frontier: Vec::new(),
            next: Vec::new(),
        }
    }

    /// Expands the graph around `v` and returns a predicate accepting the
    /// checks farthest from it: unreachable ones if any, otherwise those in
    /// the last layer reached.
    fn farthest(&mut self, v: usize, checks: &[Vec<u32>], var_checks: &[Vec<u32>]) -> impl Fn(usize) -> bool + '_ {
        self.stamp += 1;
        let stamp = self.stamp;
        let m = checks.len();
        self.var_seen[v] = stamp;
        self.frontier.clear();
        for &c in &var_checks[v] {
            self.check_seen[c as usize] = stamp;
            self.check_depth[c as usize] = 0;
            self.frontier.push(c);
        }
        let mut reached = self.frontier.len();
        let mut depth = 0;
        while reached < m && !self.frontier.is_empty() && depth < PEG_MAX_DEPTH {
            depth += 1;
            self.next.clear();
            for &c in &self.frontier {
                for &u in &checks[c as usize] {
                    if self.var_seen[u as usize] == stamp {
                        continue;
                    }
                    self.var_seen[u as usize] = stamp;
                    for &k in &var_checks[u as usize] {
                        if self.check_seen[k as usize] != stamp {
                            self.check_seen[k as usize] = stamp;
                            self.check_depth[k as usize] = depth;
                            self.next.push(k);
                        }
                    }
                }
            }
            reached += self.next.len();
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
        let full = reached == m;
        move |c| {
            if self.check_seen[c] != stamp {
                true
            } else {
                full && depth > 0 && self.check_depth[c] == depth
            }
        }
    }
}

struct DegreeBuckets {
    buckets: Vec<Vec<usize>>,
    position: Vec<usize>,
    degree: Vec<usize>,
}

impl DegreeBuckets {
    fn new(m: usize) -> Self {
        DegreeBuckets { buckets: vec![(0..m).collect()], position: (0..m).collect(), degree: vec![0; m] }
    }

    fn increment(&mut self, c: usize) {
        let d = self.degree[c];
        let pos = self.position[c];
        let bucket = &mut self.buckets[d];
        let last = *bucket.last().expect("non-empty bucket");
        bucket.swap_remove(pos);
        if last != c {
            self.position[last] = pos;
        }
        self.degree[c] = d + 1;
        if self.buckets.len() <= d + 1 {
            self.buckets.push(Vec::new());
        }
        self.position[c] = self.buckets[d + 1].len();
        self.buckets[d + 1].push(c);
    }

    /// Uniformly random check among the lowest-degree checks accepted by `ok`.
    fn pick<R: Rng, F: Fn(usize) -> bool>(&self, rng: &mut R, ok: F) -> Option<usize> {
        for bucket in &self.buckets {
            if bucket.is_empty() {
                continue;
            }
            for _ in 0..8 {
                let c = bucket[rng.random_range(0..bucket.len())];
                if ok(c) {
                    return Some(c);
                }
            }
            let candidates: Vec<usize> = bucket.iter().copied().filter(|&c| ok(c)).collect();
            if !candidates.is_empty() {
                return Some(candidates[rng.random_range(0..candidates.len())]);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_code() -> LdpcCode {
        LdpcCode::from_checks(6, vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 0]]).unwrap()
    }

    #[test]
    fn toy_code_syndromes() {
        let code = toy_code();
        assert_eq!(code.parities(&[0; 6]).unwrap(), vec![0, 0, 0]);
        assert_eq!(code.parities(&[1, 0, 1, 0, 1, 0]).unwrap(), vec![0, 0, 0]);
        assert_eq!(code.parities(&[1, 0, 0, 0, 0, 0]).unwrap(), vec![1, 0, 1]);
        assert!(matches!(code.parities(&[0; 5]), Err(Error::InvalidBlock { .. })));
    }

    #[test]
    fn single_flip_touches_its_checks_only() {
        let code = generate_code(600, 0.035, 1.2, 3).unwrap();
        let zero = vec![0u8; 600];
        for v in [0usize, 17, 599] {
            let mut bits = zero.clone();
            bits[v] = 1;
            let s = code.parities(&bits).unwrap();
            let touched: Vec<u32> = (0..code.m() as u32).filter(|&j| s[j as usize] == 1).collect();
            let mut expected = code.var_checks()[v].clone();
            expected.sort_unstable();
            assert_eq!(touched, expected);
        }
    }

    #[test]
    fn full_sized_code_has_expected_checks() {
        assert_eq!(check_count(10_000, 0.035, 1.2).unwrap(), 2627);
        let code = generate_code(10_000, 0.035, 1.2, 1).unwrap();
        assert_eq!(code.m(), 2627);
        assert!(code.column_weights().iter().all(|&w| w >= 2));
        assert!(code.rate() > 0.0 && code.rate() < 1.0);
        assert_eq!(code.four_cycles(), 0);
        let rows = code.row_weights();
        let (lo, hi) = (rows.iter().min().unwrap(), rows.iter().max().unwrap());
        assert!(hi - lo <= 1, "row weights {lo}..{hi}");
    }

    #[test]
    fn construction_is_deterministic() {
        let a = generate_code(2000, 0.035, 1.2, 9).unwrap();
        let b = generate_code(2000, 0.035, 1.2, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_code(2000, 0.035, 1.2, 10).unwrap();
        assert_ne!(a.checks(), c.checks());
        assert_ne!(a.code_id(), c.code_id());
    }

    #[test]
    fn infeasible_rates_are_rejected() {
        assert!(matches!(generate_code(10_000, 0.2, 1.2, 1), Err(Error::InvalidRate(_))));
        assert!(matches!(generate_code(10_000, 0.035, 0.9, 1), Err(Error::InvalidRate(_))));
        assert!(matches!(generate_code(5, 0.035, 1.2, 1), Err(Error::InvalidRate(_))));
        // six bits at 10% QBER and f = 7 need more checks than bits
        assert!(matches!(generate_code(6, 0.1, 7.0, 1), Err(Error::InvalidRate(_))));
        assert!(LdpcCode::from_checks(3, vec![vec![0, 0]]).is_err());
        assert!(LdpcCode::from_checks(3, vec![vec![0, 5]]).is_err());
    }
}
