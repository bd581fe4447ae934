use std::fmt;

use crate::error::{check_probability, contract, Result};
use crate::lattice::{Site, Window};
use crate::rng::SiteStream;

/// One occupancy bit per site of a window (`true` = occupied).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SiteField {
    window: Window,
    bits: Vec<bool>,
}

impl SiteField {
    pub fn vacant(window: Window) -> Self {
        Self { window, bits: vec![false; window.len()] }
    }

    pub fn occupied(window: Window) -> Self {
        Self { window, bits: vec![true; window.len()] }
    }

    pub fn from_bits(window: Window, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != window.len() {
            return Err(contract(format!("{} bits for a window of {} sites", bits.len(), window.len())));
        }
        Ok(Self { window, bits })
    }

    pub fn from_fn(window: Window, mut f: impl FnMut(Site) -> bool) -> Self {
        let bits = (0..window.len()).map(|i| f(window.site(i))).collect();
        Self { window, bits }
    }

    /// Field whose flat-index bit `i` is bit `i` of `mask`.
    pub fn from_mask(window: Window, mask: u64) -> Self {
        let bits = (0..window.len()).map(|i| mask >> i & 1 == 1).collect();
        Self { window, bits }
    }

    /// Inverse of [`SiteField::from_mask`]; windows up to 64 sites.
    pub fn to_mask(&self) -> u64 {
        debug_assert!(self.bits.len() <= 64);
        self.bits.iter().enumerate().fold(0, |m, (i, &b)| m | (b as u64) << i)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    /// State of `s`; sites outside the window read as vacant.
    pub fn get(&self, s: Site) -> bool {
        self.window.index(s).is_some_and(|i| self.bits[i])
    }

    pub fn set(&mut self, s: Site, value: bool) -> Result<()> {
        let i = self.window.index(s).ok_or_else(|| contract(format!("site {s} outside field window")))?;
        self.bits[i] = value;
        Ok(())
    }

    pub fn count_occupied(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        self.count_occupied() as f64 / self.bits.len() as f64
    }

    /// Restriction to a sub-window.
    pub fn crop(&self, region: &Window) -> Result<SiteField> {
        if !self.window.contains_window(region) {
            return Err(contract("crop region not inside field window"));
        }
        let mut bits = Vec::with_capacity(region.len());
        for row in 0..region.height as i32 {
            let start = self.window.index_unchecked(Site::new(region.origin.x, region.origin.y + row));
            bits.extend_from_slice(&self.bits[start..start + region.width as usize]);
        }
        Ok(SiteField { window: *region, bits })
    }

    /// Sitewise OR of two fields on the same window.
    pub fn or(&self, other: &SiteField) -> Result<SiteField> {
        self.same_window(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a | *b).collect();
        Ok(SiteField { window: self.window, bits })
    }

    /// `self <= other` at every site.
    pub fn is_below(&self, other: &SiteField) -> Result<bool> {
        self.same_window(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(a, b)| !*a | *b))
    }

    /// Sites where `self` is occupied and `other` is not.
    pub fn excess_over(&self, other: &SiteField) -> Result<usize> {
        self.same_window(other)?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && !**b).count())
    }

    fn same_window(&self, other: &SiteField) -> Result<()> {
        if self.window == other.window {
            Ok(())
        } else {
            Err(contract("fields live on different windows"))
        }
    }
}

impl fmt::Debug for SiteField {
    /// Rows printed top to bottom, `#` occupied and `.` vacant.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SiteField {}x{} at {}", self.window.width, self.window.height, self.window.origin)?;
        let w = self.window.width as usize;
        for row in self.bits.chunks(w).rev() {
            let line: String = row.iter().map(|&b| if b { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Independent Bernoulli(`prob`) occupation driven by the site-keyed stream.
///
/// A site is occupied iff its uniform is below `prob`, so fields drawn from
/// one stream at two densities are ordered pointwise.
pub fn sample_field(window: Window, prob: f64, stream: &SiteStream) -> Result<SiteField> {
    check_probability("prob", prob)?;
    Ok(SiteField::from_fn(window, |s| stream.uniform(s) < prob))
}
