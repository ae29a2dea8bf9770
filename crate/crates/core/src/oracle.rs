//! Exact sliding-window membership, used as ground truth in tests and by the
//! measurement harness. Stores up to `n + m` elements; with infinite slack
//! it remembers every element ever seen.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::params::Slack;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    /// Among the last `n` elements.
    InWindow,
    /// Among the last `n + m` elements but not the last `n`.
    InSlack,
    Out,
}

#[derive(Debug, Clone)]
pub struct WindowOracle {
    n: usize,
    m: Slack,
    /// Last `n + m` elements (last `n` when slack is infinite), newest at
    /// the back.
    buffer: VecDeque<u64>,
    window: HashMap<u64, usize>,
    slack: HashMap<u64, usize>,
    history: HashSet<u64>,
    pushed: u64,
}

fn bump(counts: &mut HashMap<u64, usize>, x: u64) {
    *counts.entry(x).or_default() += 1;
}

fn drop_one(counts: &mut HashMap<u64, usize>, x: u64) {
    match counts.get_mut(&x) {
        Some(c) if *c > 1 => *c -= 1,
        Some(_) => {
            counts.remove(&x);
        }
        None => unreachable!("multiset out of sync"),
    }
}

impl WindowOracle {
    pub fn new(n: u64, m: Slack) -> Self {
        WindowOracle {
            n: n as usize,
            m,
            buffer: VecDeque::new(),
            window: HashMap::new(),
            slack: HashMap::new(),
            history: HashSet::new(),
            pushed: 0,
        }
    }

    fn span(&self) -> usize {
        match self.m {
            Slack::Finite(m) => self.n + m as usize,
            Slack::Infinite => self.n,
        }
    }

    pub fn push(&mut self, x: u64) {
        self.pushed += 1;
        self.buffer.push_back(x);
        bump(&mut self.window, x);
        if self.buffer.len() > self.n {
            // element n+1 from the back leaves the window
            let leaving = self.buffer[self.buffer.len() - 1 - self.n];
            drop_one(&mut self.window, leaving);
            bump(&mut self.slack, leaving);
        }
        if self.buffer.len() > self.span() {
            let gone = self.buffer.pop_front().expect("non-empty");
            drop_one(&mut self.slack, gone);
        }
        if self.m.is_infinite() {
            self.history.insert(x);
        }
    }

    pub fn classify(&self, x: u64) -> Classification {
        if self.window.contains_key(&x) {
            Classification::InWindow
        } else if self.slack.contains_key(&x) || self.history.contains(&x) {
            // with infinite slack, everything ever seen is in the slack
            Classification::InSlack
        } else {
            Classification::Out
        }
    }

    /// Elements pushed so far.
    pub fn len(&self) -> u64 {
        self.pushed
    }

    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// The `k`-th most recent element (`k = 0` is the newest), if retained.
    pub fn recent(&self, k: usize) -> Option<u64> {
        let len = self.buffer.len();
        (k < len).then(|| self.buffer[len - 1 - k])
    }

    /// Elements currently retained, oldest first.
    pub fn retained(&self) -> impl Iterator<Item = u64> + '_ {
        self.buffer.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive reference: scan the full history.
    fn naive(history: &[u64], n: usize, m: Slack, x: u64) -> Classification {
        let pos = history.iter().rposition(|&y| y == x);
        match pos {
            None => Classification::Out,
            Some(p) => {
                let age = history.len() - 1 - p;
                if age < n {
                    Classification::InWindow
                } else {
                    match m {
                        Slack::Infinite => Classification::InSlack,
                        Slack::Finite(m) if age < n + m as usize => Classification::InSlack,
                        Slack::Finite(_) => Classification::Out,
                    }
                }
            }
        }
    }

    #[test]
    fn examples() {
        let mut o = WindowOracle::new(3, Slack::Finite(1));
        o.push(1);
        assert_eq!(o.classify(1), Classification::InWindow);
        for y in 10..13 {
            o.push(y);
        }
        assert_eq!(o.classify(1), Classification::InSlack);
        o.push(13);
        assert_eq!(o.classify(1), Classification::Out);
        assert_eq!(o.classify(99), Classification::Out);
        assert_eq!(o.recent(0), Some(13));
    }

    #[test]
    fn infinite_slack_remembers() {
        let mut o = WindowOracle::new(2, Slack::Infinite);
        o.push(5);
        for y in 0..100 {
            o.push(100 + y);
        }
        assert_eq!(o.classify(5), Classification::InSlack);
        assert!(o.retained().count() <= 2);
    }

    proptest! {
        #[test]
        fn matches_naive(
            stream in proptest::collection::vec(0u64..20, 0..200),
            n in 1usize..10,
            m in prop_oneof![(1u64..10).prop_map(Slack::Finite), Just(Slack::Infinite)],
        ) {
            let mut o = WindowOracle::new(n as u64, m);
            for (i, &x) in stream.iter().enumerate() {
                o.push(x);
                prop_assert!(o.retained().count() <= n + m.finite().unwrap_or(0) as usize);
                for probe in 0..20 {
                    prop_assert_eq!(o.classify(probe), naive(&stream[..=i], n, m, probe));
                }
            }
        }
    }
}
