//! Coalitions of simplified features, stored as bitmasks.

use std::fmt;

use crate::error::{Result, ShapError};

/// Widest coalition representable in a mask word.
pub const MAX_FEATURES: usize = 64;

/// Upper bound on `M` for exhaustive enumeration of all `2^M` coalitions.
pub const ENUMERATION_LIMIT: usize = 25;

/// A subset of the `M` simplified features; bit `i` set means feature `i` is present.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    mask: u64,
    n_features: usize,
}

impl Coalition {
    pub fn new(mask: u64, n_features: usize) -> Result<Self> {
        check_width(n_features)?;
        if n_features < MAX_FEATURES && mask >> n_features != 0 {
            return Err(ShapError::Domain(format!(
                "mask {mask:#x} has bits at or above M = {n_features}"
            )));
        }
        Ok(Coalition { mask, n_features })
    }

    pub fn empty(n_features: usize) -> Self {
        debug_assert!((1..=MAX_FEATURES).contains(&n_features));
        Coalition {
            mask: 0,
            n_features,
        }
    }

    pub fn full(n_features: usize) -> Self {
        debug_assert!((1..=MAX_FEATURES).contains(&n_features));
        Coalition {
            mask: full_mask(n_features),
            n_features,
        }
    }

    pub fn from_members(members: &[usize], n_features: usize) -> Result<Self> {
        check_width(n_features)?;
        let mut mask = 0u64;
        for &i in members {
            if i >= n_features {
                return Err(ShapError::Domain(format!(
                    "feature index {i} out of range for M = {n_features}"
                )));
            }
            mask |= 1 << i;
        }
        Ok(Coalition { mask, n_features })
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        self.mask
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.n_features && self.mask & (1 << i) != 0
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn is_full(&self) -> bool {
        self.mask == full_mask(self.n_features)
    }

    #[inline]
    pub fn with(self, i: usize) -> Self {
        debug_assert!(i < self.n_features);
        Coalition {
            mask: self.mask | (1 << i),
            ..self
        }
    }

    #[inline]
    pub fn without(self, i: usize) -> Self {
        debug_assert!(i < self.n_features);
        Coalition {
            mask: self.mask & !(1 << i),
            ..self
        }
    }

    pub fn complement(self) -> Self {
        Coalition {
            mask: !self.mask & full_mask(self.n_features),
            ..self
        }
    }

    /// Member indices in ascending order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_features).filter(move |&i| self.contains(i))
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

#[inline]
pub(crate) fn full_mask(n_features: usize) -> u64 {
    if n_features >= 64 {
        u64::MAX
    } else {
        (1u64 << n_features) - 1
    }
}

fn check_width(n_features: usize) -> Result<()> {
    if n_features == 0 || n_features > MAX_FEATURES {
        return Err(ShapError::Capacity(format!(
            "feature count {n_features} outside 1..={MAX_FEATURES}"
        )));
    }
    Ok(())
}

pub(crate) fn check_enumerable(n_features: usize, limit: usize) -> Result<()> {
    if n_features == 0 || n_features > limit {
        return Err(ShapError::Capacity(format!(
            "M = {n_features} outside the enumeration guard 1..={limit}"
        )));
    }
    Ok(())
}

/// All `2^M` coalitions in ascending mask order, `∅` first and the full set last.
pub fn enumerate_coalitions(n_features: usize) -> Result<impl ExactSizeIterator<Item = Coalition>> {
    check_enumerable(n_features, ENUMERATION_LIMIT)?;
    Ok((0..1usize << n_features).map(move |mask| Coalition { mask: mask as u64, n_features }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn members(c: Coalition) -> Vec<usize> {
        c.members().collect()
    }

    #[test]
    fn enumerates_small_cases_in_mask_order() {
        let one: Vec<_> = enumerate_coalitions(1).unwrap().map(members).collect();
        assert_eq!(one, vec![vec![], vec![0]]);

        let two: Vec<_> = enumerate_coalitions(2).unwrap().map(members).collect();
        assert_eq!(two, vec![vec![], vec![0], vec![1], vec![0, 1]]);

        let three: Vec<_> = enumerate_coalitions(3).unwrap().collect();
        assert_eq!(three.len(), 8);
        assert!(three[0].is_empty());
        assert!(three[7].is_full());
    }

    #[test]
    fn enumeration_guard() {
        assert!(matches!(enumerate_coalitions(0), Err(ShapError::Capacity(_))));
        assert!(matches!(enumerate_coalitions(26), Err(ShapError::Capacity(_))));
        assert_eq!(enumerate_coalitions(25).unwrap().len(), 1 << 25);
    }

    #[test]
    fn rejects_bits_beyond_width() {
        assert!(Coalition::new(0b100, 2).is_err());
        assert!(Coalition::new(0b11, 2).unwrap().is_full());
        assert!(Coalition::from_members(&[3], 3).is_err());
    }

    #[test]
    fn set_operations() {
        let c = Coalition::from_members(&[0, 2], 4).unwrap();
        assert_eq!(c.size(), 2);
        assert!(c.contains(2) && !c.contains(1));
        assert_eq!(members(c.with(1)), vec![0, 1, 2]);
        assert_eq!(members(c.without(0)), vec![2]);
        assert_eq!(members(c.complement()), vec![1, 3]);
        let wide = Coalition::full(64);
        assert_eq!(wide.size(), 64);
        assert!(wide.complement().is_empty());
    }
}
