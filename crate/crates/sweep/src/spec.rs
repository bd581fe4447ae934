use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdp_core::lattice::Rho;
use sdp_core::rng::hash_words;
use sdp_core::sdp::DestructionRule;
use sdp_core::{Result, SdpError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Quantity {
    Theta,
    Crossing { rho: Rho },
    Criterion { alpha: f64, n_hat: u32 },
}

impl Quantity {
    /// Short name used in records and for selecting heatmap data.
    pub fn label(&self) -> String {
        match self {
            Quantity::Theta => "theta".into(),
            Quantity::Crossing { rho } => format!("crossing(rho={rho})"),
            Quantity::Criterion { alpha, .. } => format!("criterion(alpha={alpha})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub p_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub scales: Vec<u32>,
    pub rule: DestructionRule,
    pub samples_per_cell: u64,
    pub master_seed: u64,
    pub quantity: Quantity,
}

/// Grid indices of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub p: usize,
    pub delta: usize,
    pub n: usize,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(SdpError::InvalidConfig(format!("{name} grid is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(SdpError::InvalidConfig(format!("{name} grid value {v} outside [0, 1]")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SdpError::InvalidConfig(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        check_grid("p", &self.p_grid)?;
        check_grid("delta", &self.delta_grid)?;
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(SdpError::InvalidConfig("scales must be nonempty and positive".into()));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SdpError::InvalidConfig("scales must be strictly ascending".into()));
        }
        if self.samples_per_cell == 0 {
            return Err(SdpError::InvalidConfig("samples per cell must be positive".into()));
        }
        self.rule.validate()?;
        if let Quantity::Criterion { alpha, n_hat } = self.quantity {
            sdp_core::estimators::CriterionConfig::new(alpha, 1, n_hat, None)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Cells in grid order (p outermost, then delta, then n).
    pub fn cells(&self) -> Vec<CellIndex> {
        let mut out = Vec::with_capacity(self.p_grid.len() * self.delta_grid.len() * self.scales.len());
        for p in 0..self.p_grid.len() {
            for delta in 0..self.delta_grid.len() {
                for n in 0..self.scales.len() {
                    out.push(CellIndex { p, delta, n });
                }
            }
        }
        out
    }

    pub fn cell_seed(&self, c: CellIndex) -> u64 {
        hash_words(&[self.master_seed, c.p as u64, c.delta as u64, c.n as u64])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SweepSpec {
        SweepSpec {
            p_grid: vec![0.2, 0.4],
            delta_grid: vec![0.1, 0.5, 0.9],
            scales: vec![8],
            rule: DestructionRule::WindowBoundary,
            samples_per_cell: 10,
            master_seed: 3,
            quantity: Quantity::Theta,
        }
    }

    #[test]
    fn validation() {
        assert!(spec().validate().is_ok());
        assert!(SweepSpec { p_grid: vec![], ..spec() }.validate().is_err());
        assert!(SweepSpec { delta_grid: vec![0.5, 0.1], ..spec() }.validate().is_err());
        assert!(SweepSpec { p_grid: vec![0.5, 1.5], ..spec() }.validate().is_err());
        assert!(SweepSpec { scales: vec![], ..spec() }.validate().is_err());
        assert!(SweepSpec { quantity: Quantity::Criterion { alpha: 0.01, n_hat: 1 }, ..spec() }.validate().is_err());
    }

    #[test]
    fn hash_and_seeds_are_stable() {
        assert_eq!(spec().hash(), spec().hash());
        assert_ne!(spec().hash(), SweepSpec { master_seed: 4, ..spec() }.hash());
        assert_eq!(spec().hash().len(), 64);
        let cells = spec().cells();
        assert_eq!(cells.len(), 6);
        let seeds: std::collections::HashSet<u64> = cells.iter().map(|&c| spec().cell_seed(c)).collect();
        assert_eq!(seeds.len(), 6);
    }
}
