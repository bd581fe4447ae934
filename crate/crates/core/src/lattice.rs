//! Square-lattice geometry on finite rectangular windows.
//!
//! Adjacency comes in two flavours: the square lattice (4 neighbours) and its
//! matching lattice (4 axis + 4 diagonal neighbours). Distances are always the
//! L1 graph distance of the square lattice, whichever adjacency is in use.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result, SdpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// L1 (graph) distance on the square lattice.
    pub fn distance(self, other: Site) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    fn offset(self, dx: i32, dy: i32) -> Site {
        Site::new(self.x + dx, self.y + dy)
    }
}

impl From<(i32, i32)> for Site {
    fn from((x, y): (i32, i32)) -> Self {
        Site::new(x, y)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Axis steps in E, N, W, S order.
const AXIS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
/// Matching-lattice steps, counter-clockwise starting east.
const MATCHING: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// A `width x height` block of sites whose lower-left corner is `origin`.
///
/// Sites inside a window are addressed by a row-major flat index
/// `(y - origin.y) * width + (x - origin.x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub origin: Site,
    pub width: u32,
    pub height: u32,
}

impl Window {
    pub fn new(origin: Site, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(contract(format!("window must be at least 1x1, got {width}x{height}")));
        }
        Ok(Self { origin, width, height })
    }

    /// Window with its lower-left corner at the lattice origin.
    pub fn at_origin(width: u32, height: u32) -> Result<Self> {
        Self::new(Site::new(0, 0), width, height)
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x_max(&self) -> i32 {
        self.origin.x + self.width as i32 - 1
    }

    pub fn y_max(&self) -> i32 {
        self.origin.y + self.height as i32 - 1
    }

    pub fn contains(&self, s: Site) -> bool {
        s.x >= self.origin.x && s.x <= self.x_max() && s.y >= self.origin.y && s.y <= self.y_max()
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.contains(other.origin) && self.contains(Site::new(other.x_max(), other.y_max()))
    }

    pub fn index(&self, s: Site) -> Option<usize> {
        self.contains(s).then(|| {
            (s.y - self.origin.y) as usize * self.width as usize + (s.x - self.origin.x) as usize
        })
    }

    pub(crate) fn index_unchecked(&self, s: Site) -> usize {
        (s.y - self.origin.y) as usize * self.width as usize + (s.x - self.origin.x) as usize
    }

    pub fn site(&self, index: usize) -> Site {
        let w = self.width as usize;
        Site::new(self.origin.x + (index % w) as i32, self.origin.y + (index / w) as i32)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    /// True for sites on the outermost ring of the window.
    pub fn on_boundary(&self, s: Site) -> bool {
        self.contains(s)
            && (s.x == self.origin.x || s.x == self.x_max() || s.y == self.origin.y || s.y == self.y_max())
    }

    /// Window grown by `margin` sites on every side.
    pub fn expand(&self, margin: u32) -> Window {
        Window {
            origin: self.origin.offset(-(margin as i32), -(margin as i32)),
            width: self.width + 2 * margin,
            height: self.height + 2 * margin,
        }
    }

    /// Window shrunk by `margin` sites on every side.
    pub fn inset(&self, margin: u32) -> Result<Window> {
        if self.width <= 2 * margin || self.height <= 2 * margin {
            return Err(contract(format!(
                "cannot inset a {}x{} window by {margin}",
                self.width, self.height
            )));
        }
        Window::new(
            self.origin.offset(margin as i32, margin as i32),
            self.width - 2 * margin,
            self.height - 2 * margin,
        )
    }

    /// Sub-rectangle given by column range `[x0, x1)` and row range `[y0, y1)`
    /// relative to this window's origin.
    pub fn sub(&self, x0: u32, x1: u32, y0: u32, y1: u32) -> Result<Window> {
        if x1 <= x0 || y1 <= y0 || x1 > self.width || y1 > self.height {
            return Err(contract(format!(
                "sub-rectangle [{x0},{x1})x[{y0},{y1}) does not fit a {}x{} window",
                self.width, self.height
            )));
        }
        Window::new(self.origin.offset(x0 as i32, y0 as i32), x1 - x0, y1 - y0)
    }

    fn require(&self, s: Site) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(contract(format!("site {s} outside {}x{} window at {}", self.width, self.height, self.origin)))
        }
    }
}

/// L1 ball `B(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Site,
    pub radius: u32,
}

impl Ball {
    pub const fn new(center: Site, radius: u32) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, s: Site) -> bool {
        self.center.distance(s) <= self.radius
    }

    pub fn on_boundary(&self, s: Site) -> bool {
        self.center.distance(s) == self.radius
    }

    /// Smallest window holding the ball.
    pub fn bounding_window(&self) -> Window {
        let r = self.radius as i32;
        Window {
            origin: self.center.offset(-r, -r),
            width: 2 * self.radius + 1,
            height: 2 * self.radius + 1,
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let bw = self.bounding_window();
        (0..bw.len()).map(move |i| bw.site(i)).filter(move |s| self.contains(*s))
    }

    pub fn boundary(&self) -> Vec<Site> {
        self.sites().filter(|s| self.on_boundary(*s)).collect()
    }

    /// True when every site of the ball lies in `w` (the four tips suffice).
    pub fn inside(&self, w: &Window) -> bool {
        let r = self.radius as i32;
        AXIS.iter().all(|&(dx, dy)| w.contains(self.center.offset(dx * r, dy * r)))
    }

    /// True when the ball lies in `w` without touching its outer ring.
    pub fn strictly_inside(&self, w: &Window) -> bool {
        let r = self.radius as i32 + 1;
        AXIS.iter().all(|&(dx, dy)| w.contains(self.center.offset(dx * r, dy * r)))
    }
}

/// Square-lattice neighbours of `s` inside `w`, in E, N, W, S order.
pub fn neighbors4(s: Site, w: &Window) -> Result<Vec<Site>> {
    w.require(s)?;
    Ok(AXIS.iter().map(|&(dx, dy)| s.offset(dx, dy)).filter(|t| w.contains(*t)).collect())
}

/// Matching-lattice neighbours of `s` inside `w`, counter-clockwise from E.
pub fn neighbors8(s: Site, w: &Window) -> Result<Vec<Site>> {
    w.require(s)?;
    Ok(MATCHING.iter().map(|&(dx, dy)| s.offset(dx, dy)).filter(|t| w.contains(*t)).collect())
}

pub fn set_distance(a: &HashSet<Site>, b: &HashSet<Site>) -> Result<u32> {
    if a.is_empty() || b.is_empty() {
        return Err(contract("set_distance needs two nonempty sets"));
    }
    Ok(a.iter().flat_map(|v| b.iter().map(move |w| v.distance(*w))).min().unwrap())
}

/// Positive rational aspect ratio `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rho {
    pub num: u32,
    pub den: u32,
}

impl Rho {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(SdpError::InvalidConfig(format!("rho must be positive, got {num}/{den}")));
        }
        Ok(Self { num, den })
    }

    pub const fn integer(n: u32) -> Self {
        Self { num: n, den: 1 }
    }

    /// `floor(rho * s)`.
    pub fn scale(&self, s: u32) -> u64 {
        (self.num as u64 * s as u64) / self.den as u64
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Rho {
    type Err = SdpError;

    /// Accepts `3`, `1/2` or a terminating decimal such as `2.5`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SdpError::InvalidConfig(format!("cannot parse rho from {s:?}"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            return Rho::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.len() > 6 || !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let den = 10u32.pow(frac.len() as u32);
            let int: u32 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let frac: u32 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
            let num = int.checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
            let g = gcd(num, den);
            return Rho::new(num / g.max(1), den / g.max(1));
        }
        Rho::new(s.parse().map_err(|_| bad())?, 1)
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// The `floor(rho * s) x s` rectangle anchored at the lattice origin.
pub fn rectangle_window(rho: Rho, s: u32) -> Result<Window> {
    let width = rho.scale(s);
    if width == 0 || s == 0 {
        return Err(SdpError::DegenerateRectangle { rho: rho.to_string(), s });
    }
    let width = u32::try_from(width).map_err(|_| contract("rectangle width overflows u32"))?;
    Window::at_origin(width, s)
}
