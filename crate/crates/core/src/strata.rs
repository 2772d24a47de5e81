//! Principal strata and containers keyed by them.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Joint value of the two potential outcomes `(Y(0), Y(1))`.
///
/// Integer codes follow the order `(0,0)`, `(1,0)`, `(0,1)`, `(1,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stratum {
    /// No event with or without the decision.
    Stable = 0,
    /// Event without the decision, none with it.
    Treatable = 1,
    /// Event only with the decision.
    BetterWithout = 2,
    /// Event either way.
    Severe = 3,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [
        Stratum::Stable,
        Stratum::Treatable,
        Stratum::BetterWithout,
        Stratum::Severe,
    ];

    pub fn from_outcomes(y0: bool, y1: bool) -> Stratum {
        match (y0, y1) {
            (false, false) => Stratum::Stable,
            (true, false) => Stratum::Treatable,
            (false, true) => Stratum::BetterWithout,
            (true, true) => Stratum::Severe,
        }
    }

    /// Inverse of [`Stratum::from_outcomes`].
    pub fn outcomes(self) -> (bool, bool) {
        match self {
            Stratum::Stable => (false, false),
            Stratum::Treatable => (true, false),
            Stratum::BetterWithout => (false, true),
            Stratum::Severe => (true, true),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Stratum> {
        Stratum::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stratum::Stable => "stable",
            Stratum::Treatable => "treatable",
            Stratum::BetterWithout => "better_without",
            Stratum::Severe => "severe",
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Free-function form of [`Stratum::from_outcomes`].
pub fn stratum_from_outcomes(y0: bool, y1: bool) -> Stratum {
    Stratum::from_outcomes(y0, y1)
}

/// One value per stratum, indexed by [`Stratum`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerStratum<T>(pub [T; 4]);

impl<T> PerStratum<T> {
    pub fn from_fn(mut f: impl FnMut(Stratum) -> T) -> Self {
        PerStratum(Stratum::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Stratum, &T)> {
        Stratum::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerStratum<U> {
        PerStratum::from_fn(|h| f(&self[h]))
    }
}

impl<T> Index<Stratum> for PerStratum<T> {
    type Output = T;

    fn index(&self, h: Stratum) -> &T {
        &self.0[h as usize]
    }
}

impl<T> IndexMut<Stratum> for PerStratum<T> {
    fn index_mut(&mut self, h: Stratum) -> &mut T {
        &mut self.0[h as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appendix_codes() {
        assert_eq!(stratum_from_outcomes(false, false), Stratum::Stable);
        assert_eq!(stratum_from_outcomes(true, false), Stratum::Treatable);
        assert_eq!(stratum_from_outcomes(false, true), Stratum::BetterWithout);
        assert_eq!(stratum_from_outcomes(true, true), Stratum::Severe);
        assert_eq!(Stratum::Stable.code(), 0);
        assert_eq!(Stratum::Severe.code(), 3);
    }

    #[test]
    fn mapping_is_bijective() {
        let mut seen = std::collections::HashSet::new();
        for y0 in [false, true] {
            for y1 in [false, true] {
                let h = stratum_from_outcomes(y0, y1);
                assert_eq!(h.outcomes(), (y0, y1));
                assert_eq!(Stratum::from_code(h.code()), Some(h));
                seen.insert(h);
            }
        }
        assert_eq!(seen.len(), 4);
        assert_eq!(Stratum::from_code(4), None);
    }
}
