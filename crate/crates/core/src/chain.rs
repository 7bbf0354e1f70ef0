//! Monotone chains: decoding orders over the `M * N` transformed symbols that
//! keep each terminal's own symbols in natural order.
//!
//! A chain is identified by its terminal sequence `gamma`. Terminals and
//! positions are zero based here; the text format uses one-based terminal
//! ids.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::source::check_block_length;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonotoneChain {
    terminals: usize,
    n: usize,
    gamma: Vec<usize>,
    /// `idx[t]` is the position `i_t` decoded at step `t`.
    idx: Vec<usize>,
}

impl MonotoneChain {
    /// Validates a terminal sequence and derives the positions by counting
    /// earlier occurrences of the same terminal.
    pub fn from_gamma(gamma: Vec<usize>, terminals: usize, n: usize) -> Result<Self> {
        if terminals == 0 {
            return Err(Error::Chain("a chain needs at least one terminal".into()));
        }
        if !n.is_power_of_two() {
            return Err(Error::BlockLength(n));
        }
        if gamma.len() != terminals * n {
            return Err(Error::Chain(format!(
                "length {} differs from M*N = {}",
                gamma.len(),
                terminals * n
            )));
        }
        let mut seen = vec![0usize; terminals];
        let mut idx = Vec::with_capacity(gamma.len());
        for (t, &g) in gamma.iter().enumerate() {
            if g >= terminals {
                return Err(Error::Chain(format!("terminal {g} at step {t} out of range")));
            }
            idx.push(seen[g]);
            seen[g] += 1;
        }
        if let Some(g) = seen.iter().position(|&c| c != n) {
            return Err(Error::Chain(format!(
                "terminal {g} occurs {} times, expected {n}",
                seen[g]
            )));
        }
        Ok(Self { terminals, n, gamma, idx })
    }

    /// Decodes terminal 0 completely, then terminal 1, and so on.
    pub fn corner(terminals: usize, n: usize) -> Result<Self> {
        if terminals < 2 {
            return Err(Error::Chain("corner chains need at least two terminals".into()));
        }
        let gamma = (0..terminals).flat_map(|g| std::iter::repeat_n(g, n)).collect();
        Self::from_gamma(gamma, terminals, n)
    }

    /// Two-terminal chain that alternates across the root after decoding the
    /// first half of terminal 0: `N/2` zeros, `(0, 1)` repeated `N/2` times,
    /// then `N/2` ones.
    pub fn alternating(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::Chain(format!("alternating chain needs N >= 4, got {n}")));
        }
        check_block_length(n)?;
        let half = n / 2;
        let mut gamma = vec![0; half];
        for _ in 0..half {
            gamma.extend([0, 1]);
        }
        gamma.extend(std::iter::repeat_n(1, half));
        Self::from_gamma(gamma, 2, n)
    }

    /// Uniformly shuffled interleaving of the terminal runs.
    pub fn random(terminals: usize, n: usize, seed: u64) -> Result<Self> {
        if terminals < 2 {
            return Err(Error::Chain("random chains need at least two terminals".into()));
        }
        check_block_length(n)?;
        let mut gamma: Vec<usize> =
            (0..terminals).flat_map(|g| std::iter::repeat_n(g, n)).collect();
        let mut rng = SplitMix64::new(seed);
        for i in (1..gamma.len()).rev() {
            let j = rng.next_below(i as u64 + 1) as usize;
            gamma.swap(i, j);
        }
        Self::from_gamma(gamma, terminals, n)
    }

    /// Repeats every step `2^k` times.
    pub fn k_extend(&self, k: u32) -> Result<Self> {
        let rep = 1usize << k;
        let gamma = self
            .gamma
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g, rep))
            .collect();
        Self::from_gamma(gamma, self.terminals, self.n * rep)
    }

    pub fn terminals(&self) -> usize {
        self.terminals
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    /// Number of steps, `M * N`.
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn gamma(&self) -> &[usize] {
        &self.gamma
    }

    pub fn idx(&self) -> &[usize] {
        &self.idx
    }

    /// `(terminal, position)` decoded at step `t`.
    pub fn step(&self, t: usize) -> (usize, usize) {
        (self.gamma[t], self.idx[t])
    }

    /// Components of position `i` decoded strictly before step `t`, sorted.
    pub fn known_set(&self, t: usize, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..t.min(self.len()))
            .filter(|&s| self.idx[s] == i)
            .map(|s| self.gamma[s])
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_corner(&self) -> bool {
        self.gamma.windows(2).all(|w| w[0] <= w[1])
    }

    /// Steps at which terminal `g` is decoded, in order.
    pub fn steps_of(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        self.gamma.iter().enumerate().filter(move |(_, &x)| x == g).map(|(t, _)| t)
    }

    /// Parses a whitespace-separated line of one-based terminal ids. `M` is
    /// the largest id and `N` the count of id 1.
    pub fn parse(text: &str) -> Result<Self> {
        let ids: Vec<usize> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.starts_with('#'))
            .flat_map(str::split_whitespace)
            .map(|s| s.parse().map_err(|e| Error::Parse(format!("terminal id {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if ids.contains(&0) {
            return Err(Error::Chain("terminal ids are one based".into()));
        }
        let terminals = ids.iter().copied().max().unwrap_or(0);
        let n = ids.iter().filter(|&&g| g == 1).count();
        Self::from_gamma(ids.into_iter().map(|g| g - 1).collect(), terminals, n)
    }

    pub fn to_text(&self) -> String {
        let ids: Vec<String> = self.gamma.iter().map(|g| (g + 1).to_string()).collect();
        ids.join(" ") + "\n"
    }
}
