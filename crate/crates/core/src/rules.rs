//! Rule definitions: given the `ell` offered vertices of one step (their
//! component sizes and which of them share a component), a rule selects the
//! set of edges to add among them.
//!
//! Pairs and positions are 0-based internally; `Pair::one_based` gives the
//! conventional 1-based labels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestState;

/// Largest supported tuple length.
pub const MAX_ELL: usize = 12;
/// Capacity of a single decision's edge set.
pub const MAX_EDGES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    ErdosRenyi,
    Product,
    Sum,
    BohmanFrieze,
    Dcdgm,
    JoinTwoSmallest,
    ForcedOnlySmallest,
    BoundedSizeTable,
    MinRuleCustom,
}

impl RuleKind {
    pub const ALL: [RuleKind; 9] = [
        RuleKind::ErdosRenyi,
        RuleKind::Product,
        RuleKind::Sum,
        RuleKind::BohmanFrieze,
        RuleKind::Dcdgm,
        RuleKind::JoinTwoSmallest,
        RuleKind::ForcedOnlySmallest,
        RuleKind::BoundedSizeTable,
        RuleKind::MinRuleCustom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::ErdosRenyi => "erdos_renyi",
            RuleKind::Product => "product",
            RuleKind::Sum => "sum",
            RuleKind::BohmanFrieze => "bohman_frieze",
            RuleKind::Dcdgm => "dcdgm",
            RuleKind::JoinTwoSmallest => "join_two_smallest",
            RuleKind::ForcedOnlySmallest => "forced_only_smallest",
            RuleKind::BoundedSizeTable => "bounded_size_table",
            RuleKind::MinRuleCustom => "min_rule_custom",
        }
    }

    /// Kinds that choose among the consecutive pairs `(1,2), (3,4), ...`.
    pub fn is_pair_choice(self) -> bool {
        matches!(
            self,
            RuleKind::ErdosRenyi
                | RuleKind::Product
                | RuleKind::Sum
                | RuleKind::BohmanFrieze
                | RuleKind::BoundedSizeTable
                | RuleKind::MinRuleCustom
        )
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = RuleKind::ALL.iter().map(|k| k.name()).collect();
                Error::config(format!("unknown rule `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Prefer the earliest pair or position in tuple order.
    #[default]
    FirstListed,
    /// Uniform among tied candidates, drawn from the run's stream.
    Random,
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_listed" => Ok(TieBreak::FirstListed),
            "random" => Ok(TieBreak::Random),
            _ => Err(Error::config(format!("unknown tie-break `{s}`"))),
        }
    }
}

/// Unordered pair of tuple positions, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub a: u8,
    pub b: u8,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Self {
        debug_assert!(a != b);
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Pair {
            a: a as u8,
            b: b as u8,
        }
    }

    pub fn one_based(self) -> (usize, usize) {
        (self.a as usize + 1, self.b as usize + 1)
    }
}

/// The edge set `E_m` chosen for one offered tuple.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleDecision {
    pub edges: ArrayVec<Pair, MAX_EDGES>,
}

impl RuleDecision {
    pub fn empty() -> Self {
        RuleDecision::default()
    }

    pub fn single(p: Pair) -> Self {
        let mut edges = ArrayVec::new();
        edges.push(p);
        RuleDecision { edges }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// 1-based position pairs.
    pub fn one_based(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|p| p.one_based()).collect()
    }
}

/// The `ell` vertices offered at one step together with what a rule may see.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfferedTuple {
    pub step: u64,
    pub vertices: ArrayVec<usize, MAX_ELL>,
    pub sizes: ArrayVec<usize, MAX_ELL>,
    /// Group label per position: the index of the first position lying in
    /// the same component.
    pub groups: ArrayVec<u8, MAX_ELL>,
    pub roots: ArrayVec<usize, MAX_ELL>,
}

impl OfferedTuple {
    /// Reads sizes and the component partition of `vertices` from the forest.
    pub fn observe(forest: &mut ForestState, vertices: &[usize], step: u64) -> Result<Self> {
        if vertices.len() > MAX_ELL {
            return Err(Error::config(format!(
                "tuple length {} exceeds the supported maximum {MAX_ELL}",
                vertices.len()
            )));
        }
        let mut t = OfferedTuple {
            step,
            vertices: ArrayVec::new(),
            sizes: ArrayVec::new(),
            groups: ArrayVec::new(),
            roots: ArrayVec::new(),
        };
        for &v in vertices {
            let r = forest.find(v)?;
            t.vertices.push(v);
            t.roots.push(r);
            t.sizes.push(forest.root_size(r));
        }
        t.fill_groups();
        Ok(t)
    }

    /// A tuple of positions in pairwise distinct components with the given sizes.
    pub fn distinct(sizes: &[usize]) -> Self {
        let groups: Vec<usize> = (0..sizes.len()).collect();
        Self::with_groups(sizes, &groups)
    }

    /// A synthetic tuple with an explicit partition; `groups[i]` is any label,
    /// positions with equal labels share a component.
    pub fn with_groups(sizes: &[usize], groups: &[usize]) -> Self {
        assert_eq!(sizes.len(), groups.len());
        assert!(sizes.len() <= MAX_ELL);
        let mut t = OfferedTuple {
            step: 0,
            vertices: (0..sizes.len()).collect(),
            sizes: sizes.iter().copied().collect(),
            groups: ArrayVec::new(),
            roots: groups.iter().copied().collect(),
        };
        t.fill_groups();
        t
    }

    fn fill_groups(&mut self) {
        self.groups.clear();
        for i in 0..self.roots.len() {
            let g = (0..i).find(|&j| self.roots[j] == self.roots[i]).unwrap_or(i);
            self.groups.push(g as u8);
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn distinct_components(&self) -> usize {
        self.groups
            .iter()
            .enumerate()
            .filter(|&(i, &g)| g as usize == i)
            .count()
    }

    pub fn all_distinct(&self) -> bool {
        self.distinct_components() == self.len()
    }
}

/// Componentwise `min(c_i, B + 1)`.
pub fn truncate_profile(sizes: &[usize], bound: usize) -> ArrayVec<usize, MAX_ELL> {
    sizes.iter().map(|&c| c.min(bound + 1)).collect()
}

/// Decision table of a bounded-size Achlioptas rule: truncated profile to
/// the 1-based index of the pair to join.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTable {
    ell: usize,
    bound: usize,
    /// Pair index per profile, mixed-radix over `{1..=B+1}^ell` with the
    /// first position most significant.
    choice: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct DecisionTableRepr {
    ell: usize,
    #[serde(rename = "B")]
    bound: usize,
    table: BTreeMap<String, usize>,
}

impl DecisionTable {
    /// Builds a table from a function of the truncated profile. The function returns a
    /// 1-based pair index.
    pub fn from_fn(ell: usize, bound: usize, mut f: impl FnMut(&[usize]) -> usize) -> Result<Self> {
        Self::check_shape(ell, bound)?;
        let r = ell / 2;
        let radix = bound + 1;
        let count = radix.pow(ell as u32);
        let mut choice = Vec::with_capacity(count);
        let mut profile = vec![1usize; ell];
        for idx in 0..count {
            let mut rem = idx;
            for slot in profile.iter_mut().rev() {
                *slot = rem % radix + 1;
                rem /= radix;
            }
            let pick = f(&profile);
            if pick == 0 || pick > r {
                return Err(Error::config(format!(
                    "pair index {pick} out of range 1..={r} for profile {profile:?}"
                )));
            }
            choice.push(pick as u8);
        }
        Ok(DecisionTable { ell, bound, choice })
    }

    fn check_shape(ell: usize, bound: usize) -> Result<()> {
        if ell < 2 || ell % 2 != 0 || ell > MAX_ELL {
            return Err(Error::config(format!(
                "decision table needs an even ell in 2..={MAX_ELL}, got {ell}"
            )));
        }
        if bound < 1 {
            return Err(Error::config("decision table needs B >= 1"));
        }
        let entries = (bound as u128 + 1).checked_pow(ell as u32);
        if entries.is_none_or(|e| e > 1 << 24) {
            return Err(Error::config(format!(
                "decision table with ell = {ell}, B = {bound} is too large"
            )));
        }
        Ok(())
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    fn index(&self, sizes: &[usize]) -> usize {
        let radix = self.bound + 1;
        sizes
            .iter()
            .fold(0, |acc, &c| acc * radix + c.min(radix) - 1)
    }

    /// 1-based pair index chosen for these (untruncated) sizes.
    pub fn lookup(&self, sizes: &[usize]) -> usize {
        self.choice[self.index(sizes)] as usize
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: DecisionTableRepr = serde_json::from_str(text)?;
        Self::try_from(repr)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DecisionTableRepr::from(self)).expect("table serializes")
    }
}

fn profile_key(profile: &[usize]) -> String {
    profile
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl TryFrom<DecisionTableRepr> for DecisionTable {
    type Error = Error;

    fn try_from(repr: DecisionTableRepr) -> Result<Self> {
        Self::check_shape(repr.ell, repr.bound)?;
        for key in repr.table.keys() {
            let parsed: std::result::Result<Vec<usize>, _> =
                key.split(',').map(|p| p.trim().parse::<usize>()).collect();
            match parsed {
                Ok(p) if p.len() == repr.ell && p.iter().all(|&c| (1..=repr.bound + 1).contains(&c)) => {}
                _ => return Err(Error::config(format!("malformed table profile `{key}`"))),
            }
        }
        let mut missing = None;
        let table = DecisionTable::from_fn(repr.ell, repr.bound, |profile| {
            let key = profile_key(profile);
            match repr.table.get(&key) {
                Some(&i) => i,
                None => {
                    missing.get_or_insert(key);
                    1
                }
            }
        })?;
        if let Some(key) = missing {
            return Err(Error::config(format!("incomplete decision table: no entry for `{key}`")));
        }
        Ok(table)
    }
}

impl From<&DecisionTable> for DecisionTableRepr {
    fn from(t: &DecisionTable) -> Self {
        let radix = t.bound + 1;
        let mut table = BTreeMap::new();
        let mut profile = vec![1usize; t.ell];
        for (idx, &c) in t.choice.iter().enumerate() {
            let mut rem = idx;
            for slot in profile.iter_mut().rev() {
                *slot = rem % radix + 1;
                rem /= radix;
            }
            table.insert(profile_key(&profile), c as usize);
        }
        DecisionTableRepr {
            ell: t.ell,
            bound: t.bound,
            table,
        }
    }
}

impl Serialize for DecisionTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DecisionTableRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DecisionTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = DecisionTableRepr::deserialize(d)?;
        DecisionTable::try_from(repr).map_err(serde::de::Error::custom)
    }
}

/// Structural classification of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleClass {
    pub is_achlioptas: bool,
    pub is_merging: bool,
    pub is_bounded_size: bool,
    pub is_nice: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub kind: RuleKind,
    pub ell: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<DecisionTable>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

type Candidates = ArrayVec<Pair, 64>;

impl RuleSpec {
    fn plain(kind: RuleKind, ell: usize) -> Self {
        RuleSpec {
            kind,
            ell,
            r: None,
            bound: None,
            table: None,
            tie_break: TieBreak::FirstListed,
        }
    }

    fn paired(kind: RuleKind, r: usize) -> Self {
        RuleSpec {
            r: Some(r),
            ..Self::plain(kind, 2 * r)
        }
    }

    /// Classical random graph process: always the first pair.
    pub fn erdos_renyi() -> Self {
        Self::paired(RuleKind::ErdosRenyi, 1)
    }

    pub fn product(r: usize) -> Self {
        Self::paired(RuleKind::Product, r)
    }

    pub fn sum(r: usize) -> Self {
        Self::paired(RuleKind::Sum, r)
    }

    pub fn bohman_frieze() -> Self {
        RuleSpec {
            bound: Some(1),
            ..Self::paired(RuleKind::BohmanFrieze, 2)
        }
    }

    pub fn dcdgm() -> Self {
        Self::plain(RuleKind::Dcdgm, 4)
    }

    pub fn join_two_smallest(ell: usize) -> Self {
        Self::plain(RuleKind::JoinTwoSmallest, ell)
    }

    pub fn forced_only_smallest(ell: usize) -> Self {
        Self::plain(RuleKind::ForcedOnlySmallest, ell)
    }

    pub fn bounded_table(table: DecisionTable) -> Self {
        RuleSpec {
            bound: Some(table.bound()),
            r: Some(table.ell() / 2),
            ell: table.ell(),
            table: Some(table),
            ..Self::plain(RuleKind::BoundedSizeTable, 0)
        }
    }

    /// Pair-choice rule minimizing the larger endpoint size, optionally seen
    /// through the truncation `min(c, B + 1)`.
    pub fn min_rule_custom(r: usize, bound: Option<usize>) -> Self {
        RuleSpec {
            bound,
            ..Self::paired(RuleKind::MinRuleCustom, r)
        }
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    /// Default instance of each kind; `bounded_size_table` defaults to the
    /// table form of the Bohman-Frieze rule.
    pub fn default_for(kind: RuleKind) -> Self {
        match kind {
            RuleKind::ErdosRenyi => Self::erdos_renyi(),
            RuleKind::Product => Self::product(2),
            RuleKind::Sum => Self::sum(2),
            RuleKind::BohmanFrieze => Self::bohman_frieze(),
            RuleKind::Dcdgm => Self::dcdgm(),
            RuleKind::JoinTwoSmallest => Self::join_two_smallest(3),
            RuleKind::ForcedOnlySmallest => Self::forced_only_smallest(3),
            RuleKind::BoundedSizeTable => Self::bounded_table(
                DecisionTable::from_fn(4, 1, |p| if p[0] == 1 && p[1] == 1 { 1 } else { 2 })
                    .expect("Bohman-Frieze table"),
            ),
            RuleKind::MinRuleCustom => Self::min_rule_custom(2, None),
        }
    }

    /// Builds a rule from a name and optional shape parameters.
    pub fn build(
        kind: RuleKind,
        ell: Option<usize>,
        r: Option<usize>,
        bound: Option<usize>,
        table: Option<DecisionTable>,
        tie_break: TieBreak,
    ) -> Result<Self> {
        let pairs = r.or(ell.map(|l| l / 2));
        let spec = match kind {
            RuleKind::ErdosRenyi => {
                let mut s = Self::erdos_renyi();
                if let Some(l) = ell.or(r.map(|r| 2 * r)) {
                    s.ell = l;
                    s.r = (l % 2 == 0).then_some(l / 2);
                }
                s
            }
            RuleKind::Product => Self::product(pairs.unwrap_or(2)),
            RuleKind::Sum => Self::sum(pairs.unwrap_or(2)),
            RuleKind::BohmanFrieze => Self::bohman_frieze(),
            RuleKind::Dcdgm => Self::dcdgm(),
            RuleKind::JoinTwoSmallest => Self::join_two_smallest(ell.unwrap_or(3)),
            RuleKind::ForcedOnlySmallest => Self::forced_only_smallest(ell.unwrap_or(3)),
            RuleKind::BoundedSizeTable => match table {
                Some(t) => Self::bounded_table(t),
                None => {
                    return Err(Error::config(
                        "bounded_size_table requires a decision table",
                    ))
                }
            },
            RuleKind::MinRuleCustom => Self::min_rule_custom(pairs.unwrap_or(2), bound),
        };
        let spec = spec.with_tie_break(tie_break);
        spec.validate()?;
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("rule {}: {msg}", self.kind)));
        if self.ell < 2 || self.ell > MAX_ELL {
            return bad(format!("ell = {} outside 2..={MAX_ELL}", self.ell));
        }
        match self.kind {
            RuleKind::Product | RuleKind::Sum | RuleKind::MinRuleCustom | RuleKind::BoundedSizeTable => {
                match self.r {
                    Some(r) if r >= 1 && 2 * r == self.ell => {}
                    _ => return bad(format!("needs ell = 2r, got ell = {} r = {:?}", self.ell, self.r)),
                }
            }
            RuleKind::BohmanFrieze | RuleKind::Dcdgm if self.ell != 4 => {
                return bad(format!("is defined for ell = 4, got {}", self.ell));
            }
            RuleKind::ErdosRenyi if self.r.is_some_and(|r| 2 * r != self.ell) => {
                return bad("r inconsistent with ell".into());
            }
            _ => {}
        }
        if self.kind == RuleKind::BoundedSizeTable {
            match &self.table {
                Some(t) if t.ell() == self.ell && Some(t.bound()) == self.bound => {}
                Some(_) => return bad("table shape does not match ell/B".into()),
                None => return bad("missing decision table".into()),
            }
        }
        if self.kind == RuleKind::MinRuleCustom && self.bound == Some(0) {
            return bad("B must be at least 1".into());
        }
        Ok(())
    }

    pub fn pair_count(&self) -> Option<usize> {
        self.kind.is_pair_choice().then(|| self.r.unwrap_or(self.ell / 2))
    }

    pub fn classify(&self) -> RuleClass {
        use RuleKind::*;
        let bounded_min = self.kind == MinRuleCustom && self.bound.is_some();
        RuleClass {
            is_achlioptas: self.kind.is_pair_choice(),
            is_merging: !matches!(self.kind, ForcedOnlySmallest),
            is_bounded_size: matches!(self.kind, ErdosRenyi | BohmanFrieze | BoundedSizeTable)
                || bounded_min,
            is_nice: matches!(
                self.kind,
                ErdosRenyi | BohmanFrieze | BoundedSizeTable | Dcdgm | JoinTwoSmallest | MinRuleCustom
            ),
        }
    }

    /// Truncation bound the rule decides through, if it is bounded-size.
    pub fn size_bound(&self) -> Option<usize> {
        match self.kind {
            RuleKind::ErdosRenyi => Some(1),
            RuleKind::BohmanFrieze => Some(1),
            RuleKind::BoundedSizeTable => self.bound,
            RuleKind::MinRuleCustom => self.bound,
            _ => None,
        }
    }

    /// Selects `E_m` for an offered tuple. Consumes randomness only when
    /// `tie_break` is random and a tie actually occurs.
    pub fn decide<R: Rng + ?Sized>(&self, tuple: &OfferedTuple, rng: &mut R) -> Result<RuleDecision> {
        self.check_arity(tuple)?;
        let cands = self.candidates(tuple);
        Ok(match cands.len() {
            0 => RuleDecision::empty(),
            1 => RuleDecision::single(cands[0]),
            len => match self.tie_break {
                TieBreak::FirstListed => RuleDecision::single(cands[0]),
                TieBreak::Random => RuleDecision::single(cands[rng.random_range(0..len)]),
            },
        })
    }

    /// The distribution of decisions for a tuple: a single certain decision,
    /// or the uniform law over tied candidates under random tie-breaking.
    pub fn decision_law(&self, tuple: &OfferedTuple) -> Result<Vec<(RuleDecision, f64)>> {
        self.check_arity(tuple)?;
        let cands = self.candidates(tuple);
        Ok(match (cands.len(), self.tie_break) {
            (0, _) => vec![(RuleDecision::empty(), 1.0)],
            (_, TieBreak::FirstListed) | (1, _) => vec![(RuleDecision::single(cands[0]), 1.0)],
            (len, TieBreak::Random) => {
                let w = 1.0 / len as f64;
                cands.iter().map(|&p| (RuleDecision::single(p), w)).collect()
            }
        })
    }

    fn check_arity(&self, tuple: &OfferedTuple) -> Result<()> {
        if tuple.len() != self.ell {
            return Err(Error::Arity {
                rule: self.kind.name().into(),
                expected: self.ell,
                got: tuple.len(),
            });
        }
        Ok(())
    }

    /// Candidate edges in tie-break order; the first is the first-listed choice.
    fn candidates(&self, t: &OfferedTuple) -> Candidates {
        let c = &t.sizes;
        let mut out = Candidates::new();
        match self.kind {
            RuleKind::ErdosRenyi => out.push(Pair::new(0, 1)),
            RuleKind::BohmanFrieze => {
                out.push(if c[0] == 1 && c[1] == 1 {
                    Pair::new(0, 1)
                } else {
                    Pair::new(2, 3)
                });
            }
            RuleKind::Product => self.min_pair(t, &mut out, |x, y| x as u128 * y as u128),
            RuleKind::Sum => self.min_pair(t, &mut out, |x, y| x as u128 + y as u128),
            RuleKind::MinRuleCustom => {
                let cut = self.bound.map_or(usize::MAX, |b| b + 1);
                self.min_pair(t, &mut out, |x, y| x.max(y).min(cut) as u128)
            }
            RuleKind::BoundedSizeTable => {
                let table = self.table.as_ref().expect("validated rule has a table");
                let i = table.lookup(c) - 1;
                out.push(Pair::new(2 * i, 2 * i + 1));
            }
            RuleKind::Dcdgm => {
                let smaller = |i: usize, j: usize| -> ArrayVec<usize, 2> {
                    match c[i].cmp(&c[j]) {
                        std::cmp::Ordering::Less => [i].into_iter().collect(),
                        std::cmp::Ordering::Greater => [j].into_iter().collect(),
                        std::cmp::Ordering::Equal => [i, j].into_iter().collect(),
                    }
                };
                for &a in &smaller(0, 1) {
                    for &b in &smaller(2, 3) {
                        out.push(Pair::new(a, b));
                    }
                }
            }
            RuleKind::JoinTwoSmallest => two_smallest(t, &mut out),
            RuleKind::ForcedOnlySmallest => {
                if t.all_distinct() {
                    two_smallest(t, &mut out);
                }
            }
        }
        out
    }

    fn min_pair(&self, t: &OfferedTuple, out: &mut Candidates, score: impl Fn(usize, usize) -> u128) {
        let r = self.ell / 2;
        let scores: ArrayVec<u128, { MAX_ELL / 2 }> =
            (0..r).map(|i| score(t.sizes[2 * i], t.sizes[2 * i + 1])).collect();
        let best = *scores.iter().min().expect("at least one pair");
        for (i, &s) in scores.iter().enumerate() {
            if s == best {
                out.push(Pair::new(2 * i, 2 * i + 1));
            }
        }
    }
}

/// Edges joining the two smallest distinct components among the offered
/// positions: every tied position pair, generated with the earliest
/// smallest position and then its earliest partner first.
fn two_smallest(t: &OfferedTuple, out: &mut Candidates) {
    let c = &t.sizes;
    let ell = t.len();
    let Some(min1) = (0..ell).map(|i| c[i]).min() else {
        return;
    };
    for p in (0..ell).filter(|&i| c[i] == min1) {
        let others = (0..ell).filter(|&q| t.groups[q] != t.groups[p]);
        let Some(min2) = others.clone().map(|q| c[q]).min() else {
            continue;
        };
        for q in others.filter(|&q| c[q] == min2) {
            let pair = Pair::new(p, q);
            if !out.contains(&pair) {
                out.push(pair);
            }
        }
    }
}

/// A rule as written in a config file: a bare name, or a name with shape
/// parameters (`{"name": "product", "r": 3}`; `kind` is accepted for `name`,
/// so a serialized [`RuleSpec`] reads back too).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleRef {
    Name(RuleKind),
    Args(RuleArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleArgs {
    #[serde(alias = "kind")]
    pub name: RuleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<DecisionTable>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl RuleRef {
    pub fn resolve(&self) -> Result<RuleSpec> {
        match self {
            RuleRef::Name(kind) => {
                let spec = RuleSpec::default_for(*kind);
                spec.validate()?;
                Ok(spec)
            }
            RuleRef::Args(a) => RuleSpec::build(a.name, a.ell, a.r, a.bound, a.table.clone(), a.tie_break),
        }
    }
}

impl From<RuleKind> for RuleRef {
    fn from(kind: RuleKind) -> Self {
        RuleRef::Name(kind)
    }
}
