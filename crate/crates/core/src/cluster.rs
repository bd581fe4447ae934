//! Cluster labeling and the connection events built on it.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::field::SiteField;
use crate::lattice::{Ball, Site, Window};

/// Marks sites that are not of the labeled state.
pub const NO_LABEL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    /// Square lattice.
    Four,
    /// Matching lattice (axis plus diagonal neighbours).
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// First column to last column.
    Horizontal,
    /// First row to last row.
    Vertical,
}

impl Direction {
    pub fn transpose(self) -> Direction {
        match self {
            Direction::Horizontal => Direction::Vertical,
            Direction::Vertical => Direction::Horizontal,
        }
    }
}

/// Union-find labeler with reusable buffers for hot Monte Carlo loops.
///
/// Sites are scanned in row-major order and merged with their already
/// scanned neighbours; roots always point at the smallest flat index, which
/// is therefore the canonical cluster label.
#[derive(Debug, Default, Clone)]
pub struct Labeler {
    parent: Vec<u32>,
}

impl Labeler {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let grand = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = grand;
            i = grand;
        }
        i
    }

    #[inline]
    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }

    /// Canonical label per site (`NO_LABEL` off-state). Valid until the next
    /// call.
    pub fn label(&mut self, field: &SiteField, state: bool, conn: Connectivity) -> &[u32] {
        let w = field.window().width as usize;
        let h = field.window().height as usize;
        let bits = field.bits();
        self.parent.clear();
        self.parent.resize(w * h, NO_LABEL);
        for y in 0..h {
            let row = y * w;
            for x in 0..w {
                let i = row + x;
                if bits[i] != state {
                    continue;
                }
                self.parent[i] = i as u32;
                if x > 0 && bits[i - 1] == state {
                    self.union(i as u32, (i - 1) as u32);
                }
                if y > 0 {
                    let below = i - w;
                    if bits[below] == state {
                        self.union(i as u32, below as u32);
                    }
                    if conn == Connectivity::Eight {
                        if x > 0 && bits[below - 1] == state {
                            self.union(i as u32, (below - 1) as u32);
                        }
                        if x + 1 < w && bits[below + 1] == state {
                            self.union(i as u32, (below + 1) as u32);
                        }
                    }
                }
            }
        }
        for i in 0..w * h {
            if self.parent[i] != NO_LABEL {
                let r = self.find(i as u32);
                self.parent[i] = r;
            }
        }
        &self.parent
    }

    /// Whether some `state` cluster touches both opposite sides.
    pub fn crossing(&mut self, field: &SiteField, state: bool, conn: Connectivity, dir: Direction) -> bool {
        self.spanning_labels(field, state, conn, dir).next().is_some()
    }

    /// Number of distinct `state` clusters touching both opposite sides.
    pub fn spanning_count(&mut self, field: &SiteField, state: bool, conn: Connectivity, dir: Direction) -> usize {
        self.spanning_labels(field, state, conn, dir).count()
    }

    fn spanning_labels(
        &mut self,
        field: &SiteField,
        state: bool,
        conn: Connectivity,
        dir: Direction,
    ) -> impl Iterator<Item = u32> + '_ {
        let win = *field.window();
        let (w, h) = (win.width as usize, win.height as usize);
        let labels = self.label(field, state, conn);
        let (first, last): (Vec<usize>, Vec<usize>) = match dir {
            Direction::Horizontal => ((0..h).map(|y| y * w).collect(), (0..h).map(|y| y * w + w - 1).collect()),
            Direction::Vertical => ((0..w).collect(), (0..w).map(|x| (h - 1) * w + x).collect()),
        };
        let mut start: Vec<u32> = first.iter().map(|&i| labels[i]).filter(|&l| l != NO_LABEL).collect();
        start.sort_unstable();
        start.dedup();
        let mut end: Vec<u32> = last.iter().map(|&i| labels[i]).filter(|&l| l != NO_LABEL).collect();
        end.sort_unstable();
        end.dedup();
        end.into_iter().filter(move |l| start.binary_search(l).is_ok())
    }
}

/// Canonical cluster labels of the sites in a given state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub window: Window,
    pub state: bool,
    pub connectivity: Connectivity,
    labels: Vec<u32>,
    sizes: BTreeMap<u32, usize>,
}

impl ClusterLabeling {
    pub fn label(&self, s: Site) -> Option<u32> {
        self.window.index(s).map(|i| self.labels[i]).filter(|&l| l != NO_LABEL)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn cluster_sizes(&self) -> &BTreeMap<u32, usize> {
        &self.sizes
    }

    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn label_clusters(f: &SiteField, state: bool, conn: Connectivity) -> ClusterLabeling {
    let labels = Labeler::new().label(f, state, conn).to_vec();
    let mut sizes = BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l != NO_LABEL) {
        *sizes.entry(l).or_insert(0) += 1;
    }
    ClusterLabeling { window: *f.window(), state, connectivity: conn, labels, sizes }
}

/// Crossing of the whole field window by a `state` path. Occupied crossings
/// are taken on the square lattice (`Four`), vacant ones on the matching
/// lattice (`Eight`), which makes the two dual.
pub fn has_crossing(f: &SiteField, state: bool, conn: Connectivity, dir: Direction) -> bool {
    Labeler::new().crossing(f, state, conn, dir)
}

/// Whether `s` is in the labeled state and its cluster meets `target`.
pub fn cluster_reaches(l: &ClusterLabeling, s: Site, target: &[Site]) -> Result<bool> {
    if !l.window.contains(s) {
        return Err(contract(format!("site {s} outside labeling window")));
    }
    let Some(own) = l.label(s) else { return Ok(false) };
    for t in target {
        if !l.window.contains(*t) {
            return Err(contract(format!("target site {t} outside labeling window")));
        }
    }
    Ok(target.iter().any(|t| l.label(*t) == Some(own)))
}

/// Breadth-first walk over the occupied 4-cluster of `start`, stopping as
/// soon as `stop` returns true for a visited site. Returns whether it
/// stopped early. `allowed` restricts the walk.
pub(crate) fn walk_cluster(
    f: &SiteField,
    start: Site,
    allowed: impl Fn(Site) -> bool,
    mut stop: impl FnMut(Site) -> bool,
    seen: &mut Vec<bool>,
    queue: &mut VecDeque<Site>,
) -> bool {
    let win = f.window();
    seen.clear();
    seen.resize(win.len(), false);
    queue.clear();
    if !f.get(start) || !allowed(start) {
        return false;
    }
    seen[win.index_unchecked(start)] = true;
    queue.push_back(start);
    while let Some(s) = queue.pop_front() {
        if stop(s) {
            return true;
        }
        for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            let t = Site::new(s.x + dx, s.y + dy);
            if let Some(i) = win.index(t) {
                if !seen[i] && f.bits()[i] && allowed(t) {
                    seen[i] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    false
}

/// Finite-volume version of "the occupied cluster of `i` reaches
/// `∂B(i, k)` but is finite": the 4-cluster reaches L1 distance `k` from
/// `i` without touching the outer ring of the window.
pub fn blocked_cluster_event(f: &SiteField, i: Site, k: u32) -> Result<bool> {
    let win = *f.window();
    if !Ball::new(i, k).strictly_inside(&win) {
        return Err(contract(format!("ball B({i}, {k}) is not interior to the field window")));
    }
    let mut reached = false;
    let touched = walk_cluster(
        f,
        i,
        |_| true,
        |s| {
            reached |= i.distance(s) >= k;
            win.on_boundary(s)
        },
        &mut Vec::new(),
        &mut VecDeque::new(),
    );
    Ok(reached && !touched)
}
