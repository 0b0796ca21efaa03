//! Disjoint-set forest over the vertex set with a component-size histogram.
//!
//! The process never stores edges: every quantity the analysis needs is a
//! functional of the multiset of component sizes, so the forest plus the
//! histogram `size -> number of components of that size` is the whole graph
//! state. Union is by size, `find` uses path halving.

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

/// Result of joining the components of two vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeOutcome {
    pub merged: bool,
    pub new_size: Option<usize>,
    pub join: Option<Join>,
}

/// Details of a union of two distinct components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Join {
    /// Root that survives the union.
    pub root: usize,
    /// Root that now points at `root`.
    pub absorbed: usize,
    /// Sizes of the surviving and absorbed components before the union.
    pub sizes: (usize, usize),
}

impl MergeOutcome {
    const UNCHANGED: MergeOutcome = MergeOutcome {
        merged: false,
        new_size: None,
        join: None,
    };
}

#[derive(Debug, Clone)]
pub struct ForestState {
    parent: Vec<u32>,
    /// Component size; meaningful only at roots.
    size: Vec<u32>,
    hist: FxHashMap<u32, u32>,
    comp_count: usize,
    l1: usize,
    edges_accepted: u64,
}

/// A query answer `N_{..k}` paired with the threshold it was asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeQueryResult {
    pub k: usize,
    pub value: usize,
}

impl ForestState {
    /// Empty graph on `n` vertices.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("vertex count n must be at least 1"));
        }
        if n > u32::MAX as usize {
            return Err(Error::config(format!(
                "vertex count n = {n} exceeds the supported maximum {}",
                u32::MAX
            )));
        }
        let mut parent = Vec::new();
        let mut size = Vec::new();
        parent
            .try_reserve_exact(n)
            .map_err(|_| Error::Allocation(n))?;
        size.try_reserve_exact(n).map_err(|_| Error::Allocation(n))?;
        parent.extend(0..n as u32);
        size.resize(n, 1);
        let mut hist = FxHashMap::default();
        hist.insert(1, n as u32);
        Ok(ForestState {
            parent,
            size,
            hist,
            comp_count: n,
            l1: 1,
            edges_accepted: 0,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.parent.len()
    }

    #[inline]
    pub fn comp_count(&self) -> usize {
        self.comp_count
    }

    #[inline]
    pub fn l1(&self) -> usize {
        self.l1
    }

    /// Number of accepted edges that joined two distinct components.
    #[inline]
    pub fn edges_accepted(&self) -> u64 {
        self.edges_accepted
    }

    pub fn find(&mut self, v: usize) -> Result<usize> {
        self.check_vertex(v)?;
        Ok(self.root(v))
    }

    #[inline]
    pub(crate) fn root(&mut self, v: usize) -> usize {
        let mut x = v as u32;
        loop {
            let p = self.parent[x as usize];
            if p == x {
                return x as usize;
            }
            let gp = self.parent[p as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
    }

    /// Root lookup without path shortening.
    pub fn root_of(&self, v: usize) -> usize {
        let mut x = v;
        while self.parent[x] as usize != x {
            x = self.parent[x] as usize;
        }
        x
    }

    /// Size of the component containing `v`.
    pub fn component_size(&mut self, v: usize) -> Result<usize> {
        let r = self.find(v)?;
        Ok(self.size[r] as usize)
    }

    #[inline]
    pub(crate) fn root_size(&self, root: usize) -> usize {
        self.size[root] as usize
    }

    pub fn merge(&mut self, u: usize, v: usize) -> Result<MergeOutcome> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        let (ru, rv) = (self.root(u), self.root(v));
        Ok(self.merge_roots(ru, rv))
    }

    pub(crate) fn merge_roots(&mut self, ru: usize, rv: usize) -> MergeOutcome {
        if ru == rv {
            return MergeOutcome::UNCHANGED;
        }
        let (su, sv) = (self.size[ru], self.size[rv]);
        let (root, absorbed, s_root, s_abs) = if su >= sv {
            (ru, rv, su, sv)
        } else {
            (rv, ru, sv, su)
        };
        let joined = s_root + s_abs;
        self.parent[absorbed] = root as u32;
        self.size[root] = joined;
        self.hist_remove(s_root);
        self.hist_remove(s_abs);
        *self.hist.entry(joined).or_insert(0) += 1;
        self.comp_count -= 1;
        self.edges_accepted += 1;
        if joined as usize > self.l1 {
            self.l1 = joined as usize;
        }
        MergeOutcome {
            merged: true,
            new_size: Some(joined as usize),
            join: Some(Join {
                root,
                absorbed,
                sizes: (s_root as usize, s_abs as usize),
            }),
        }
    }

    #[inline]
    fn hist_remove(&mut self, s: u32) {
        let slot = self
            .hist
            .get_mut(&s)
            .expect("histogram entry for a live component size");
        *slot -= 1;
        if *slot == 0 {
            self.hist.remove(&s);
        }
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n() {
            Err(Error::VertexOutOfRange {
                vertex: v,
                n: self.n(),
            })
        } else {
            Ok(())
        }
    }

    /// Number of components of exactly size `s`.
    pub fn count_of_size(&self, s: usize) -> usize {
        u32::try_from(s)
            .ok()
            .and_then(|s| self.hist.get(&s))
            .copied()
            .unwrap_or(0) as usize
    }

    /// Sorted (descending by size) snapshot of the histogram.
    pub fn profile(&self) -> SizeProfile {
        let mut entries: Vec<(usize, usize)> = self
            .hist
            .iter()
            .map(|(&s, &c)| (s as usize, c as usize))
            .collect();
        entries.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        SizeProfile {
            n: self.n(),
            entries,
        }
    }

    /// `N_{>=k}`: vertices in components of size at least `k`.
    pub fn n_ge_k(&self, k: usize) -> usize {
        self.hist
            .iter()
            .filter(|(&s, _)| s as usize >= k)
            .map(|(&s, &c)| s as usize * c as usize)
            .sum()
    }

    /// `N_{<=k} = n - N_{>=k+1}`.
    pub fn n_le_k(&self, k: usize) -> usize {
        self.n() - self.n_ge_k(k + 1)
    }

    /// `M_k^B = N_{>=k} - N_{>=Bk}`: vertices in components with size in `[k, Bk)`.
    pub fn m_k_b(&self, k: usize, b: usize) -> Result<usize> {
        if b < 2 {
            return Err(Error::config(format!("band factor B = {b} must be at least 2")));
        }
        Ok(self.n_ge_k(k) - self.n_ge_k(b.saturating_mul(k)))
    }

    /// Sum of the `j` largest component sizes.
    pub fn l_top(&self, j: usize) -> usize {
        self.profile().l_top(j)
    }

    pub fn l2(&self) -> usize {
        self.profile().l2()
    }

    /// Roots of all components of size at least `k`, with their sizes.
    pub fn components_at_least(&self, k: usize) -> Vec<(usize, usize)> {
        (0..self.n())
            .filter(|&v| self.parent[v] as usize == v && self.size[v] as usize >= k)
            .map(|v| (v, self.size[v] as usize))
            .collect()
    }

    /// Full consistency check against a from-scratch recount. O(n).
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.n();
        let mut counted = vec![0u32; n];
        for v in 0..n {
            counted[self.root_of(v)] += 1;
        }
        let mut hist: FxHashMap<u32, u32> = FxHashMap::default();
        for v in 0..n {
            if self.parent[v] as usize == v {
                if counted[v] != self.size[v] {
                    return Err(format!(
                        "root {v}: stored size {} but {} members",
                        self.size[v], counted[v]
                    ));
                }
                *hist.entry(counted[v]).or_insert(0) += 1;
            }
        }
        if hist != self.hist {
            return Err("histogram disagrees with recount".into());
        }
        let mass: u64 = self.hist.iter().map(|(&s, &c)| s as u64 * c as u64).sum();
        if mass != n as u64 {
            return Err(format!("histogram mass {mass} != n = {n}"));
        }
        let comps: usize = self.hist.values().map(|&c| c as usize).sum();
        if comps != self.comp_count {
            return Err(format!("comp_count {} != {comps}", self.comp_count));
        }
        let max = self.hist.keys().copied().max().unwrap_or(0) as usize;
        if max != self.l1 {
            return Err(format!("l1 {} != max size {max}", self.l1));
        }
        Ok(())
    }
}

/// Immutable, size-sorted view of the histogram used to answer several
/// queries for one recording row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeProfile {
    n: usize,
    /// `(size, count)` with strictly decreasing size.
    entries: Vec<(usize, usize)>,
}

impl SizeProfile {
    /// Profile of an arbitrary multiset of component sizes.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut map: FxHashMap<usize, usize> = FxHashMap::default();
        for &s in sizes {
            *map.entry(s).or_insert(0) += 1;
        }
        let mut entries: Vec<_> = map.into_iter().collect();
        entries.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        SizeProfile {
            n: sizes.iter().sum(),
            entries,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn comp_count(&self) -> usize {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn l1(&self) -> usize {
        self.entries.first().map_or(0, |e| e.0)
    }

    /// Second order statistic of the size multiset; 0 when only one component.
    pub fn l2(&self) -> usize {
        match self.entries.as_slice() {
            [] => 0,
            [(s, c), ..] if *c >= 2 => *s,
            [_, (s, _), ..] => *s,
            [_] => 0,
        }
    }

    pub fn n_ge_k(&self, k: usize) -> usize {
        self.entries
            .iter()
            .take_while(|e| e.0 >= k)
            .map(|&(s, c)| s * c)
            .sum()
    }

    pub fn n_le_k(&self, k: usize) -> usize {
        self.n - self.n_ge_k(k + 1)
    }

    pub fn m_k_b(&self, k: usize, b: usize) -> Result<usize> {
        if b < 2 {
            return Err(Error::config(format!("band factor B = {b} must be at least 2")));
        }
        Ok(self.n_ge_k(k) - self.n_ge_k(b.saturating_mul(k)))
    }

    pub fn l_top(&self, j: usize) -> usize {
        let mut left = j;
        let mut total = 0;
        for &(s, c) in &self.entries {
            if left == 0 {
                break;
            }
            let take = c.min(left);
            total += s * take;
            left -= take;
        }
        total
    }

    /// Vertex counts per dyadic size bin `[2^j, 2^{j+1})`, for `j = 0..=floor(log2 n)`.
    pub fn dyadic_bins(&self) -> Vec<usize> {
        let bins = (usize::BITS - self.n.leading_zeros()) as usize;
        let mut out = vec![0; bins.max(1)];
        for &(s, c) in &self.entries {
            let j = (usize::BITS - 1 - s.leading_zeros()) as usize;
            out[j] += s * c;
        }
        out
    }

    /// `(sum_s s^2 hist[s] - l1^2) / n`: mean cluster size with the largest
    /// component removed.
    pub fn susceptibility(&self) -> f64 {
        let total: u128 = self
            .entries
            .iter()
            .map(|&(s, c)| (s as u128) * (s as u128) * c as u128)
            .sum();
        let l1 = self.l1() as u128;
        (total - l1 * l1) as f64 / self.n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state_with_sizes(sizes: &[usize]) -> ForestState {
        let n = sizes.iter().sum();
        let mut f = ForestState::new(n).unwrap();
        let mut start = 0;
        for &s in sizes {
            for v in start + 1..start + s {
                f.merge(start, v).unwrap();
            }
            start += s;
        }
        f
    }

    #[test]
    fn init_is_empty_graph() {
        let f = ForestState::new(5).unwrap();
        assert_eq!(f.profile().entries(), &[(1, 5)]);
        assert_eq!(f.l1(), 1);
        assert_eq!(f.comp_count(), 5);

        let f = ForestState::new(1).unwrap();
        assert_eq!(f.profile().entries(), &[(1, 1)]);
        assert_eq!(f.l1(), 1);
        assert_eq!(f.l2(), 0);

        let f = ForestState::new(1_000_000).unwrap();
        assert_eq!(f.n_ge_k(1), 1_000_000);
        assert!(ForestState::new(0).is_err());
    }

    #[test]
    fn find_roots() {
        let mut f = ForestState::new(5).unwrap();
        assert_eq!(f.find(3).unwrap(), 3);
        f.merge(1, 2).unwrap();
        assert_eq!(f.find(1).unwrap(), f.find(2).unwrap());
        for v in 0..5 {
            let r = f.find(v).unwrap();
            assert_eq!(f.find(r).unwrap(), r);
        }
        assert!(matches!(
            f.find(5),
            Err(Error::VertexOutOfRange { vertex: 5, n: 5 })
        ));
        assert!(f.merge(0, 9).is_err());
    }

    #[test]
    fn merge_updates_histogram() {
        let mut f = ForestState::new(4).unwrap();
        let out = f.merge(0, 1).unwrap();
        assert!(out.merged);
        assert_eq!(out.new_size, Some(2));
        assert_eq!(f.count_of_size(1), 2);
        assert_eq!(f.count_of_size(2), 1);

        let before = f.profile();
        let again = f.merge(0, 1).unwrap();
        assert!(!again.merged);
        assert_eq!(again.new_size, None);
        assert_eq!(f.profile(), before);
        assert_eq!(f.edges_accepted(), 1);

        f.merge(1, 2).unwrap();
        f.merge(2, 3).unwrap();
        assert_eq!(f.comp_count(), 1);
        assert_eq!(f.l1(), 4);
        assert_eq!(f.l2(), 0);
    }

    #[test]
    fn size_queries() {
        let f = state_with_sizes(&[3, 2, 1, 1, 1]);
        assert_eq!(f.n(), 8);
        assert_eq!(f.n_ge_k(2), 5);
        assert_eq!(f.n_le_k(1), 3);
        assert_eq!(f.n_ge_k(1), 8);
        assert_eq!(f.m_k_b(2, 2).unwrap(), 5);

        let g = state_with_sizes(&[5, 2, 1]);
        assert_eq!(g.m_k_b(2, 2).unwrap(), 2);
        assert!(g.m_k_b(2, 1).is_err());
        assert_eq!(g.l_top(2), 7);
        assert_eq!(g.l_top(1), g.l1());

        let h = ForestState::new(3).unwrap();
        assert_eq!(h.l_top(5), 3);
        assert_eq!(h.l2(), 1);
    }

    #[test]
    fn l2_ties_with_l1() {
        let f = state_with_sizes(&[4, 4, 1]);
        assert_eq!(f.l1(), 4);
        assert_eq!(f.l2(), 4);
    }

    #[test]
    fn dyadic_bins_partition_vertices() {
        let f = ForestState::new(8).unwrap();
        assert_eq!(f.profile().dyadic_bins(), vec![8, 0, 0, 0]);
        let g = state_with_sizes(&[8]);
        assert_eq!(g.profile().dyadic_bins(), vec![0, 0, 0, 8]);
        let h = state_with_sizes(&[3, 2, 1, 1, 1]);
        let bins = h.profile().dyadic_bins();
        assert_eq!(bins, vec![3, 5, 0, 0]);
        assert_eq!(bins.iter().sum::<usize>(), 8);
    }

    #[test]
    fn susceptibility_excludes_largest() {
        let f = state_with_sizes(&[3, 2, 1, 1, 1]);
        // (9 + 4 + 3 - 9) / 8
        assert!((f.profile().susceptibility() - 7.0 / 8.0).abs() < 1e-15);
    }

    /// Component tracker that recomputes everything from an explicit list of
    /// merged pairs by label propagation.
    fn naive_sizes(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for &(u, v) in edges {
                let m = label[u].min(label[v]);
                if label[u] != m || label[v] != m {
                    label[u] = m;
                    label[v] = m;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut counts = vec![0; n];
        for &l in &label {
            counts[l] += 1;
        }
        counts.into_iter().filter(|&c| c > 0).collect()
    }

    proptest! {
        #[test]
        fn agrees_with_naive_tracker(
            n in 1usize..=50,
            raw in proptest::collection::vec((0usize..50, 0usize..50), 0..120),
        ) {
            let edges: Vec<_> = raw.into_iter().map(|(u, v)| (u % n, v % n)).collect();
            let mut f = ForestState::new(n).unwrap();
            let mut l1_prev = 1;
            for (i, &(u, v)) in edges.iter().enumerate() {
                f.merge(u, v).unwrap();
                prop_assert!(f.check_invariants().is_ok());
                prop_assert!(f.l1() >= l1_prev);
                l1_prev = f.l1();
                let expect = SizeProfile::from_sizes(&naive_sizes(n, &edges[..=i]));
                let got = f.profile();
                prop_assert_eq!(&got, &expect);
                prop_assert_eq!(f.l2(), expect.l2());
                for k in 1..=n {
                    prop_assert_eq!(f.n_ge_k(k), expect.n_ge_k(k));
                }
            }
        }

        #[test]
        fn merge_leaves_other_components_alone(
            n in 2usize..=40,
            raw in proptest::collection::vec((0usize..40, 0usize..40), 1..60),
        ) {
            let mut f = ForestState::new(n).unwrap();
            for (u, v) in raw {
                let (u, v) = (u % n, v % n);
                let (ru, rv) = (f.find(u).unwrap(), f.find(v).unwrap());
                let others: Vec<(usize, usize)> = f
                    .components_at_least(1)
                    .into_iter()
                    .filter(|&(r, _)| r != ru && r != rv)
                    .collect();
                f.merge(u, v).unwrap();
                for (r, s) in others {
                    prop_assert_eq!(f.find(r).unwrap(), r);
                    prop_assert_eq!(f.component_size(r).unwrap(), s);
                }
            }
        }
    }
}
