//! Anisotropic square-lattice geometry and the van der Waals pair potential.
//!
//! Lengths are measured in units of the nominal lattice spacing `a_l`, and
//! energies are frequencies (E/h). The only exception is
//! [`displacement_estimate`], which works in SI units.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Planck constant in J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Mass of a lithium-6 atom in kg.
pub const LI6_MASS: f64 = 6.015_122_887 * 1.660_539_066_60e-27;
/// Nominal lattice spacing of the 1064 nm / sqrt(2) lattice, in metres.
pub const LATTICE_SPACING_M: f64 = 1.064e-6 / std::f64::consts::SQRT_2;

/// Lattice constants along the two axes, in units of `a_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub x: f64,
    pub y: f64,
}

impl Spacing {
    pub fn isotropic() -> Self {
        Spacing { x: 1.0, y: 1.0 }
    }

    /// Spacing with `x / y = 1 + anisotropy` and `y = 1`.
    pub fn anisotropic(anisotropy: f64) -> Result<Self> {
        Spacing { x: 1.0 + anisotropy, y: 1.0 }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.x > 0.0 && self.y > 0.0 && self.x.is_finite() && self.y.is_finite()) {
            return invalid(format!("lattice spacings must be positive, got {:?}", self));
        }
        Ok(self)
    }

    /// Relative anisotropy `x / y - 1`.
    pub fn anisotropy(&self) -> f64 {
        self.x / self.y - 1.0
    }

    pub fn length(&self, dx: i32, dy: i32) -> f64 {
        (self.x * dx as f64).hypot(self.y * dy as f64)
    }
}

/// Region of interest used to select the analysed sites of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Roi {
    Full,
    /// Sites whose distance (in sites) from the grid centre lies in `[inner, outer]`.
    Annulus { inner: f64, outer: f64 },
    /// Inclusive rectangle of site coordinates.
    Rect { x0: usize, y0: usize, x1: usize, y1: usize },
}

/// Finite `nx` by `ny` grid. Sites are numbered row-major: `index = ix + nx * iy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub nx: usize,
    pub ny: usize,
    pub spacing: Spacing,
    pub roi: Roi,
}

impl LatticeGeometry {
    pub fn new(nx: usize, ny: usize, spacing: Spacing) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return invalid(format!("grid must be non-empty, got {nx}x{ny}"));
        }
        Ok(LatticeGeometry { nx, ny, spacing: spacing.validated()?, roi: Roi::Full })
    }

    pub fn with_roi(mut self, roi: Roi) -> Result<Self> {
        match roi {
            Roi::Annulus { inner, outer } if !(inner >= 0.0 && outer >= inner) => {
                return invalid(format!("annulus radii must satisfy 0 <= inner <= outer, got {inner}, {outer}"));
            }
            Roi::Rect { x0, y0, x1, y1 } if x0 > x1 || y0 > y1 || x1 >= self.nx || y1 >= self.ny => {
                return invalid("rectangular ROI must lie inside the grid");
            }
            _ => {}
        }
        self.roi = roi;
        Ok(self)
    }

    pub fn n_sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn coords(&self, site: usize) -> Result<(usize, usize)> {
        if site >= self.n_sites() {
            return invalid(format!("site {site} outside {}x{} grid", self.nx, self.ny));
        }
        Ok((site % self.nx, site / self.nx))
    }

    pub fn index(&self, ix: usize, iy: usize) -> Result<usize> {
        if ix >= self.nx || iy >= self.ny {
            return invalid(format!("coordinates ({ix}, {iy}) outside {}x{} grid", self.nx, self.ny));
        }
        Ok(ix + self.nx * iy)
    }

    /// Integer displacement `b - a`.
    pub fn displacement(&self, a: usize, b: usize) -> Result<(i32, i32)> {
        let (ax, ay) = self.coords(a)?;
        let (bx, by) = self.coords(b)?;
        Ok((bx as i32 - ax as i32, by as i32 - ay as i32))
    }

    pub fn distance(&self, a: usize, b: usize) -> Result<f64> {
        let (dx, dy) = self.displacement(a, b)?;
        Ok(self.spacing.length(dx, dy))
    }

    pub fn anisotropy(&self) -> f64 {
        self.spacing.anisotropy()
    }

    pub fn roi_mask(&self) -> Vec<bool> {
        let cx = (self.nx as f64 - 1.0) / 2.0;
        let cy = (self.ny as f64 - 1.0) / 2.0;
        (0..self.n_sites())
            .map(|s| {
                let (ix, iy) = (s % self.nx, s / self.nx);
                match self.roi {
                    Roi::Full => true,
                    Roi::Annulus { inner, outer } => {
                        let r = (ix as f64 - cx).hypot(iy as f64 - cy);
                        r >= inner && r <= outer
                    }
                    Roi::Rect { x0, y0, x1, y1 } => (x0..=x1).contains(&ix) && (y0..=y1).contains(&iy),
                }
            })
            .collect()
    }
}

/// Range of the pair interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    /// Edge neighbours only, `|dx| + |dy| = 1`.
    NearestNeighbor,
    /// Edge and diagonal neighbours, `max(|dx|, |dy|) = 1`.
    NextNearestNeighbor,
    /// All pairs with Euclidean distance `<= r_max` (in `a_l`).
    Radius { r_max: f64 },
}

impl Cutoff {
    pub fn includes(&self, spacing: &Spacing, dx: i32, dy: i32) -> bool {
        if dx == 0 && dy == 0 {
            return false;
        }
        match *self {
            Cutoff::NearestNeighbor => dx.abs() + dy.abs() == 1,
            Cutoff::NextNearestNeighbor => dx.abs().max(dy.abs()) == 1,
            Cutoff::Radius { r_max } => spacing.length(dx, dy) <= r_max * (1.0 + 1e-12),
        }
    }

    /// Largest `|dx|` or `|dy|` that can pass [`Cutoff::includes`].
    pub fn reach(&self, spacing: &Spacing) -> i32 {
        match *self {
            Cutoff::NearestNeighbor | Cutoff::NextNearestNeighbor => 1,
            Cutoff::Radius { r_max } => (r_max / spacing.x.min(spacing.y)).floor() as i32 + 1,
        }
    }
}

/// `V(r) = c6 / r^6` truncated at a cutoff. `c6` is in frequency units times `a_l^6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionModel {
    pub c6: f64,
    pub cutoff: Cutoff,
}

impl InteractionModel {
    pub fn new(c6: f64, cutoff: Cutoff) -> Result<Self> {
        if !c6.is_finite() {
            return invalid("c6 must be finite");
        }
        if let Cutoff::Radius { r_max } = cutoff {
            if !(r_max > 0.0 && r_max.is_finite()) {
                return invalid(format!("radius cutoff must be positive, got {r_max}"));
            }
        }
        Ok(InteractionModel { c6, cutoff })
    }

    /// Interaction for an integer displacement on a lattice with the given spacing.
    pub fn coupling(&self, spacing: &Spacing, dx: i32, dy: i32) -> f64 {
        if !self.cutoff.includes(spacing, dx, dy) {
            return 0.0;
        }
        self.c6 / spacing.length(dx, dy).powi(6)
    }

    /// Interaction with unit `c6`; multiply by `c6` to get [`Self::coupling`].
    pub fn unit_coupling(&self, spacing: &Spacing, dx: i32, dy: i32) -> f64 {
        if !self.cutoff.includes(spacing, dx, dy) {
            return 0.0;
        }
        spacing.length(dx, dy).powi(-6)
    }

    /// Site shift `sum_j V_ij / 2` of a site deep inside an infinite lattice.
    pub fn bulk_shift(&self, spacing: &Spacing) -> f64 {
        let reach = self.cutoff.reach(spacing);
        let mut total = 0.0;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                total += self.coupling(spacing, dx, dy);
            }
        }
        total / 2.0
    }

    pub fn with_c6(&self, c6: f64) -> Self {
        InteractionModel { c6, ..*self }
    }
}

/// Interaction energy between two sites of a finite grid.
pub fn pair_interaction(geom: &LatticeGeometry, model: &InteractionModel, site_a: usize, site_b: usize) -> Result<f64> {
    let (dx, dy) = geom.displacement(site_a, site_b)?;
    Ok(model.coupling(&geom.spacing, dx, dy))
}

/// Distance at which `|c6| / r^6` equals the Rabi frequency.
pub fn blockade_radius(c6: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return invalid(format!("Rabi frequency must be positive, got {omega}"));
    }
    Ok((c6.abs() / omega).powf(1.0 / 6.0))
}

/// Distance travelled in time `t` by a Rydberg atom accelerated by a partner
/// at separation `r`: `a(r) t^2 / 2` with `a(r) = 6 |c6| / (r^7 m)`.
///
/// SI units throughout: `c6` in J m^6, `r` in m, `mass` in kg, `t` in s.
pub fn displacement_estimate(c6: f64, r: f64, mass: f64, t: f64) -> Result<f64> {
    if !(r > 0.0) {
        return invalid(format!("separation must be positive, got {r}"));
    }
    if !(mass > 0.0) {
        return invalid(format!("mass must be positive, got {mass}"));
    }
    if t < 0.0 {
        return invalid(format!("time must be non-negative, got {t}"));
    }
    let accel = 6.0 * c6.abs() / (r.powi(7) * mass);
    Ok(0.5 * accel * t * t)
}

/// Converts `C6/h` given in MHz um^6 to SI (J m^6).
pub fn c6_si_from_mhz_um6(c6_mhz_um6: f64) -> f64 {
    c6_mhz_um6 * 1e6 * PLANCK * 1e-36
}

/// Converts `C6/h` given in MHz a_l^6 to MHz um^6.
pub fn c6_mhz_um6_from_lattice(c6_mhz_al6: f64) -> f64 {
    c6_mhz_al6 * (LATTICE_SPACING_M * 1e6).powi(6)
}
