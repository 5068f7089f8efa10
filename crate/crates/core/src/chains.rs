//! Sharing-chain algebra: platform sets, chains, the chain universe `Ω_L`,
//! backtracking candidate sets and the text label grammar.
//!
//! Chains are stored oldest-first. Reverse indexing follows the usual
//! convention where `C[0]` is the newest (last) sharing step and
//! `C[-(len-1)]` the oldest; [`SharingChain::back`] takes the non-negative
//! distance from the newest step.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Separator between platform tokens in a chain label (`"TW>FB"`).
pub const LABEL_SEPARATOR: char = '>';

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty chain label")]
    EmptyLabel,
    #[error("unknown platform `{0}`")]
    UnknownPlatform(String),
    #[error("chain length {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("invalid platform name `{0}`")]
    InvalidPlatformName(String),
    #[error("duplicate platform name `{0}`")]
    DuplicatePlatform(String),
}

/// Dense platform identifier, `0..|S|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlatformId(pub u8);

impl PlatformId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Platform {
    pub id: PlatformId,
    pub name: String,
}

/// The platform set `S`, with ids assigned densely in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatformSet {
    platforms: Vec<Platform>,
}

impl PlatformSet {
    pub fn new<I, S>(names: I) -> Result<Self, ChainError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut platforms: Vec<Platform> = Vec::new();
        for name in names {
            let name = name.as_ref();
            if name.is_empty()
                || name.contains(LABEL_SEPARATOR)
                || name.chars().any(char::is_whitespace)
            {
                return Err(ChainError::InvalidPlatformName(name.to_string()));
            }
            if platforms.iter().any(|p| p.name == name) {
                return Err(ChainError::DuplicatePlatform(name.to_string()));
            }
            if platforms.len() >= u8::MAX as usize {
                return Err(ChainError::InvalidArgument("too many platforms".into()));
            }
            platforms.push(Platform {
                id: PlatformId(platforms.len() as u8),
                name: name.to_string(),
            });
        }
        if platforms.is_empty() {
            return Err(ChainError::InvalidArgument("empty platform set".into()));
        }
        Ok(Self { platforms })
    }

    pub fn len(&self) -> usize {
        self.platforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.platforms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Platform> {
        self.platforms.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = PlatformId> + '_ {
        self.platforms.iter().map(|p| p.id)
    }

    pub fn names(&self) -> Vec<String> {
        self.platforms.iter().map(|p| p.name.clone()).collect()
    }

    pub fn by_name(&self, name: &str) -> Option<PlatformId> {
        self.platforms.iter().find(|p| p.name == name).map(|p| p.id)
    }

    pub fn name(&self, id: PlatformId) -> &str {
        &self.platforms[id.index()].name
    }

    pub fn contains(&self, id: PlatformId) -> bool {
        id.index() < self.platforms.len()
    }

    /// Formats a chain oldest-first, e.g. `TW>FB`.
    pub fn format_chain(&self, chain: &SharingChain) -> String {
        let mut out = String::new();
        for (i, id) in chain.steps().iter().enumerate() {
            if i > 0 {
                out.push(LABEL_SEPARATOR);
            }
            out.push_str(self.name(*id));
        }
        out
    }

    /// Parses `NAME ('>' NAME)*` without a length bound.
    pub fn parse_chain(&self, label: &str) -> Result<SharingChain, ChainError> {
        if label.trim().is_empty() {
            return Err(ChainError::EmptyLabel);
        }
        let steps = label
            .split(LABEL_SEPARATOR)
            .map(|tok| {
                self.by_name(tok)
                    .ok_or_else(|| ChainError::UnknownPlatform(tok.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SharingChain { steps })
    }
}

/// A sharing chain, stored oldest-first. May be empty only as the block-0
/// context of the cascade.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SharingChain {
    steps: Vec<PlatformId>,
}

impl SharingChain {
    pub fn empty() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn from_oldest_first(steps: Vec<PlatformId>) -> Self {
        Self { steps }
    }

    pub fn single(p: PlatformId) -> Self {
        Self { steps: vec![p] }
    }

    pub fn steps(&self) -> &[PlatformId] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `C[-back]`: `back(0)` is the newest step.
    pub fn back(&self, back: usize) -> Option<PlatformId> {
        let n = self.steps.len();
        if back < n {
            Some(self.steps[n - 1 - back])
        } else {
            None
        }
    }

    pub fn newest(&self) -> Option<PlatformId> {
        self.steps.last().copied()
    }

    pub fn oldest(&self) -> Option<PlatformId> {
        self.steps.first().copied()
    }

    /// The chain with one earlier sharing step `p` added.
    pub fn prepend(&self, p: PlatformId) -> Self {
        let mut steps = Vec::with_capacity(self.steps.len() + 1);
        steps.push(p);
        steps.extend_from_slice(&self.steps);
        Self { steps }
    }

    /// The newest `len` steps (the chain itself when shorter).
    pub fn truncate_newest(&self, len: usize) -> Self {
        let n = self.steps.len();
        let start = n.saturating_sub(len);
        Self {
            steps: self.steps[start..].to_vec(),
        }
    }

    pub fn contains(&self, p: PlatformId) -> bool {
        self.steps.contains(&p)
    }
}

/// Canonical order: shorter chains first, then lexicographic by platform id
/// oldest-first.
impl Ord for SharingChain {
    fn cmp(&self, other: &Self) -> Ordering {
        self.steps
            .len()
            .cmp(&other.steps.len())
            .then_with(|| self.steps.cmp(&other.steps))
    }
}

impl PartialOrd for SharingChain {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SharingChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", s.0)?;
        }
        write!(f, ")")
    }
}

/// Keeps the newest `target_len` steps of `chain`; used to remap full-length
/// labels onto the label space of an earlier cascade block.
pub fn remap_label(chain: &SharingChain, target_len: usize) -> SharingChain {
    chain.truncate_newest(target_len)
}

/// Truncates `chain` at the newest occurrence of `stop` that is not already
/// the oldest element, so that `stop` becomes the oldest retained step.
pub fn collapse_chain(chain: &SharingChain, stop: PlatformId) -> SharingChain {
    for back in 0..chain.len() {
        if chain.back(back) == Some(stop) {
            return chain.truncate_newest(back + 1);
        }
    }
    chain.clone()
}

/// All chains of length `1..=max_len` over a platform set, in canonical order.
#[derive(Debug, Clone)]
pub struct ChainUniverse {
    platforms: PlatformSet,
    max_len: usize,
    chains_by_len: Vec<Vec<SharingChain>>,
}

impl ChainUniverse {
    pub fn enumerate(platforms: PlatformSet, max_len: usize) -> Result<Self, ChainError> {
        if max_len == 0 {
            return Err(ChainError::InvalidArgument(
                "maximum chain length must be at least 1".into(),
            ));
        }
        if platforms.is_empty() {
            return Err(ChainError::InvalidArgument("empty platform set".into()));
        }
        let mut chains_by_len: Vec<Vec<SharingChain>> = Vec::with_capacity(max_len);
        let mut layer = vec![SharingChain::empty()];
        for _ in 0..max_len {
            // Appending the newest step while iterating oldest-first prefixes
            // in order keeps each layer lexicographically sorted.
            let mut next = Vec::with_capacity(layer.len() * platforms.len());
            for prefix in &layer {
                for id in platforms.ids() {
                    let mut steps = prefix.steps.clone();
                    steps.push(id);
                    next.push(SharingChain { steps });
                }
            }
            chains_by_len.push(next.clone());
            layer = next;
        }
        Ok(Self {
            platforms,
            max_len,
            chains_by_len,
        })
    }

    pub fn platforms(&self) -> &PlatformSet {
        &self.platforms
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// `S^len`, the chains of exactly `len` steps.
    pub fn layer(&self, len: usize) -> &[SharingChain] {
        if len == 0 || len > self.max_len {
            &[]
        } else {
            &self.chains_by_len[len - 1]
        }
    }

    /// `Ω_len` in canonical order.
    pub fn omega(&self, len: usize) -> Vec<SharingChain> {
        (1..=len.min(self.max_len))
            .flat_map(|l| self.layer(l).iter().cloned())
            .collect()
    }

    pub fn omega_size(&self, len: usize) -> usize {
        (1..=len.min(self.max_len)).map(|l| self.layer(l).len()).sum()
    }

    pub fn contains(&self, chain: &SharingChain) -> bool {
        !chain.is_empty()
            && chain.len() <= self.max_len
            && chain.steps.iter().all(|p| self.platforms.contains(*p))
    }

    pub fn parse_label(&self, label: &str) -> Result<SharingChain, ChainError> {
        let chain = self.platforms.parse_chain(label)?;
        if chain.len() > self.max_len {
            return Err(ChainError::TooLong {
                len: chain.len(),
                max: self.max_len,
            });
        }
        Ok(chain)
    }

    pub fn format_label(&self, chain: &SharingChain) -> String {
        self.platforms.format_chain(chain)
    }

    /// `{C} ∪ B(C)`: the chain itself followed by its one-step extensions in
    /// platform-id order.
    pub fn backtrack_candidates(&self, chain: &SharingChain) -> Result<Vec<SharingChain>, ChainError> {
        if chain.is_empty() {
            return Err(ChainError::InvalidArgument("empty chain".into()));
        }
        if chain.len() >= self.max_len {
            return Err(ChainError::InvalidArgument(format!(
                "chain of length {} cannot be extended beyond L={}",
                chain.len(),
                self.max_len
            )));
        }
        let mut out = Vec::with_capacity(self.platforms.len() + 1);
        out.push(chain.clone());
        out.extend(self.platforms.ids().map(|p| chain.prepend(p)));
        Ok(out)
    }

    /// Class index over `Ω_len`.
    pub fn class_index(&self, len: usize) -> ChainClassIndex {
        ChainClassIndex::from_sorted(self.omega(len))
    }

    /// Collapsed label space of `Ω_len` under informed stopping on `stop`.
    pub fn collapsed_class_index(&self, len: usize, stop: PlatformId) -> ChainClassIndex {
        let mut chains: Vec<SharingChain> = self
            .omega(len)
            .iter()
            .map(|c| collapse_chain(c, stop))
            .collect();
        chains.sort();
        chains.dedup();
        ChainClassIndex::from_sorted(chains)
    }
}

/// Collapsed label space of the full universe `Ω_L`.
pub fn collapse_informed(universe: &ChainUniverse, stop: PlatformId) -> ChainClassIndex {
    universe.collapsed_class_index(universe.max_len(), stop)
}

/// Bijection between chains and dense class indices in canonical order.
#[derive(Debug, Clone)]
pub struct ChainClassIndex {
    chains: Vec<SharingChain>,
    lookup: HashMap<SharingChain, usize>,
}

impl ChainClassIndex {
    pub fn from_sorted(chains: Vec<SharingChain>) -> Self {
        let lookup = chains
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self { chains, lookup }
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn index_of(&self, chain: &SharingChain) -> Option<usize> {
        self.lookup.get(chain).copied()
    }

    pub fn chain(&self, index: usize) -> Option<&SharingChain> {
        self.chains.get(index)
    }

    pub fn chains(&self) -> &[SharingChain] {
        &self.chains
    }

    pub fn labels(&self, platforms: &PlatformSet) -> Vec<String> {
        self.chains.iter().map(|c| platforms.format_chain(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s3() -> PlatformSet {
        PlatformSet::new(["FB", "FL", "TW"]).unwrap()
    }

    fn universe(n: usize, l: usize) -> ChainUniverse {
        let names: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
        ChainUniverse::enumerate(PlatformSet::new(names).unwrap(), l).unwrap()
    }

    #[test]
    fn omega_sizes_for_three_platforms() {
        let u = ChainUniverse::enumerate(s3(), 3).unwrap();
        assert_eq!(u.omega_size(3), 39);
        assert_eq!(u.omega(3).len(), 39);
        let u2 = ChainUniverse::enumerate(s3(), 2).unwrap();
        assert_eq!(u2.omega_size(2), 12);
        assert_eq!(u2.layer(2).len(), 9);
    }

    #[test]
    fn single_platform_enumeration() {
        let u = ChainUniverse::enumerate(PlatformSet::new(["FB"]).unwrap(), 2).unwrap();
        let labels: Vec<String> = u.omega(2).iter().map(|c| u.format_label(c)).collect();
        assert_eq!(labels, ["FB", "FB>FB"]);
    }

    #[test]
    fn enumerate_rejects_bad_arguments() {
        assert!(ChainUniverse::enumerate(s3(), 0).is_err());
        assert!(PlatformSet::new(Vec::<String>::new()).is_err());
        assert!(PlatformSet::new(["A>B"]).is_err());
        assert!(PlatformSet::new(["A B"]).is_err());
        assert!(PlatformSet::new(["A", "A"]).is_err());
    }

    #[test]
    fn omega_size_matches_geometric_sum_exhaustively() {
        for n in 1..=4 {
            for l in 1..=4 {
                let u = universe(n, l);
                let expected: usize = (1..=l).map(|i| n.pow(i as u32)).sum();
                assert_eq!(u.omega(l).len(), expected, "n={n} l={l}");
                let omega = u.omega(l);
                assert!(omega.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn canonical_order_is_shorter_first_then_lexicographic() {
        let u = ChainUniverse::enumerate(s3(), 2).unwrap();
        let labels: Vec<String> = u.omega(2).iter().map(|c| u.format_label(c)).collect();
        assert_eq!(&labels[..5], ["FB", "FL", "TW", "FB>FB", "FB>FL"]);
        assert_eq!(labels[11], "TW>TW");
    }

    #[test]
    fn backtrack_candidates_examples() {
        let u = ChainUniverse::enumerate(s3(), 3).unwrap();
        let fb = u.parse_label("FB").unwrap();
        let got: Vec<String> = u
            .backtrack_candidates(&fb)
            .unwrap()
            .iter()
            .map(|c| u.format_label(c))
            .collect();
        assert_eq!(got, ["FB", "FB>FB", "FL>FB", "TW>FB"]);

        let twfb = u.parse_label("TW>FB").unwrap();
        let got: Vec<String> = u
            .backtrack_candidates(&twfb)
            .unwrap()
            .iter()
            .map(|c| u.format_label(c))
            .collect();
        assert_eq!(got, ["TW>FB", "FB>TW>FB", "FL>TW>FB", "TW>TW>FB"]);

        let full = u.parse_label("FB>FB>FB").unwrap();
        assert!(u.backtrack_candidates(&full).is_err());

        let single = ChainUniverse::enumerate(PlatformSet::new(["FB"]).unwrap(), 2).unwrap();
        let c = single.parse_label("FB").unwrap();
        assert_eq!(single.backtrack_candidates(&c).unwrap().len(), 2);
    }

    #[test]
    fn remap_examples() {
        let u = ChainUniverse::enumerate(s3(), 3).unwrap();
        let c = u.parse_label("TW>FB>FL").unwrap();
        assert_eq!(u.format_label(&remap_label(&c, 1)), "FL");
        assert_eq!(u.format_label(&remap_label(&c, 2)), "FB>FL");
        let fb = u.parse_label("FB").unwrap();
        assert_eq!(remap_label(&fb, 2), fb);
    }

    #[test]
    fn label_parse_examples() {
        let u = ChainUniverse::enumerate(s3(), 3).unwrap();
        let c = u.parse_label("TW>FB").unwrap();
        assert_eq!(c.back(0), Some(PlatformId(0)));
        assert_eq!(c.back(1), Some(PlatformId(2)));
        assert_eq!(u.parse_label("FB").unwrap().len(), 1);
        assert_eq!(
            u.parse_label("XX>FB"),
            Err(ChainError::UnknownPlatform("XX".into()))
        );
        assert_eq!(u.parse_label(""), Err(ChainError::EmptyLabel));
        assert!(matches!(
            u.parse_label("FB>FB>FB>FB"),
            Err(ChainError::TooLong { len: 4, max: 3 })
        ));
        assert!(u.parse_label("FB>").is_err());
    }

    #[test]
    fn informed_collapse() {
        let u = ChainUniverse::enumerate(s3(), 3).unwrap();
        let tw = u.platforms().by_name("TW").unwrap();
        assert_eq!(collapse_informed(&u, tw).len(), 21);
        let c = u.parse_label("FB>TW>FL").unwrap();
        assert_eq!(u.format_label(&collapse_chain(&c, tw)), "TW>FL");
        let c = u.parse_label("FB>FL>FB").unwrap();
        assert_eq!(collapse_chain(&c, tw), c);
        let c = u.parse_label("TW>FB>TW").unwrap();
        assert_eq!(u.format_label(&collapse_chain(&c, tw)), "TW");
        assert_eq!(u.collapsed_class_index(1, tw).len(), 3);
        assert_eq!(u.collapsed_class_index(2, tw).len(), 9);
    }

    fn chain_strategy() -> impl Strategy<Value = (usize, usize, Vec<u8>)> {
        (1usize..=4, 1usize..=4).prop_flat_map(|(n, l)| {
            (
                Just(n),
                Just(l),
                proptest::collection::vec(0..n as u8, 1..=l),
            )
        })
    }

    proptest! {
        #[test]
        fn backtrack_members_remap_to_source((n, l, steps) in chain_strategy()) {
            let u = universe(n, l);
            let c = SharingChain::from_oldest_first(steps.into_iter().map(PlatformId).collect());
            if c.len() < l {
                let cands = u.backtrack_candidates(&c).unwrap();
                prop_assert_eq!(cands.len(), n + 1);
                prop_assert_eq!(&cands[0], &c);
                for m in &cands[1..] {
                    prop_assert_eq!(m.len(), c.len() + 1);
                    prop_assert_eq!(&remap_label(m, c.len()), &c);
                }
            } else {
                prop_assert!(u.backtrack_candidates(&c).is_err());
            }
        }

        #[test]
        fn label_round_trip((n, l, steps) in chain_strategy()) {
            let u = universe(n, l);
            let c = SharingChain::from_oldest_first(steps.into_iter().map(PlatformId).collect());
            let label = u.format_label(&c);
            prop_assert_eq!(u.parse_label(&label).unwrap(), c);
        }

        #[test]
        fn collapse_fixes_chains_with_stop_only_oldest((n, _l, steps) in chain_strategy(), stop in 0u8..4) {
            let stop = PlatformId(stop % n as u8);
            let c = SharingChain::from_oldest_first(steps.into_iter().map(PlatformId).collect());
            let collapsed = collapse_chain(&c, stop);
            let only_oldest = c.steps()[1..].iter().all(|p| *p != stop);
            prop_assert_eq!(only_oldest, collapsed == c);
            prop_assert!(collapsed.steps()[1..].iter().all(|p| *p != stop));
            prop_assert_eq!(collapse_chain(&collapsed, stop), collapsed);
        }
    }
}
