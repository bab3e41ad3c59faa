//! Lattice geometry: the period cell Q = (0,1]^m of the lattice Z^m, the
//! periodic open set Omega, its closed complement M, and the per-cell
//! inclusion M0 = M intersect Q, rasterized on a uniform tensor grid.
//!
//! All shapes are analytic, so the signed distance to M is exact; rasterized
//! indicators are derived from it. Boundary points (distance exactly 0)
//! belong to M, which is closed.

use crate::error::{Error, Result};
use serde::Serialize;

/// Uniform tensor grid over the period cell: n nodes per axis at
/// coordinates i/n, i = 0..n-1, spacing h = 1/n. Node index n is
/// identified with index 0 (the cell is half-open).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodCell {
    pub dim: usize,
    pub resolution: usize,
}

impl PeriodCell {
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidShape(format!("dimension {dim} not in 1..=3")));
        }
        if resolution < 2 {
            return Err(Error::InvalidShape(format!("resolution {resolution} < 2")));
        }
        Ok(PeriodCell { dim, resolution })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn node_count(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    /// Flattened node index, axis 0 fastest.
    pub fn index(&self, multi: &[usize]) -> usize {
        let n = self.resolution;
        multi.iter().rev().fold(0, |acc, &i| acc * n + i)
    }

    pub fn multi_index(&self, mut id: usize) -> Vec<usize> {
        let n = self.resolution;
        (0..self.dim)
            .map(|_| {
                let i = id % n;
                id /= n;
                i
            })
            .collect()
    }

    pub fn node_coords(&self, id: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(id).iter().map(|&i| i as f64 * h).collect()
    }

    /// Neighbor in +axis direction; returns (index, wrapped).
    pub fn neighbor(&self, id: usize, axis: usize) -> (usize, bool) {
        let n = self.resolution;
        let mut mi = self.multi_index(id);
        let wrapped = mi[axis] == n - 1;
        mi[axis] = if wrapped { 0 } else { mi[axis] + 1 };
        (self.index(&mi), wrapped)
    }
}

/// Parametric inclusion shapes. The inclusion M is the closed complement of
/// the periodic open set Omega within each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ShapeSpec {
    /// Omega is a connected wall of half-width `w` around the cell boundary;
    /// M0 is the centered box of half-width 0.5 - w (the model geometry).
    Frame { half_width: f64 },
    /// M0 is a centered ball of radius `r`.
    CenteredDisk { radius: f64 },
    /// M0 is a centered box of half-width `s`.
    CenteredBox { half_width: f64 },
    /// M is a connected wall of half-width `w` around the cell boundary;
    /// Omega splits into one open box per cell (thin-wall geometry).
    ThinWalls { half_width: f64 },
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v < 0.5;
        let (name, v) = match *self {
            ShapeSpec::Frame { half_width } => ("frame wall half-width", half_width),
            ShapeSpec::CenteredDisk { radius } => ("disk radius", radius),
            ShapeSpec::CenteredBox { half_width } => ("box half-width", half_width),
            ShapeSpec::ThinWalls { half_width } => ("thin-wall half-width", half_width),
        };
        if ok(v) {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!(
                "{name} must lie strictly between 0 and 0.5, got {v}; the inclusion must fit strictly inside the period cell"
            )))
        }
    }
}

/// Signed distance to the boundary of a centered box of half-width `s`,
/// positive outside. `y` is relative to the box center.
fn box_sdf(y: &[f64], s: f64) -> f64 {
    let mut out_sq = 0.0;
    let mut inner: f64 = f64::NEG_INFINITY;
    for &yd in y {
        let q = yd.abs() - s;
        if q > 0.0 {
            out_sq += q * q;
        }
        inner = inner.max(q);
    }
    if out_sq > 0.0 {
        out_sq.sqrt()
    } else {
        inner
    }
}

/// The periodic medium: rasterized indicator and exact signed distance.
#[derive(Debug, Clone)]
pub struct PeriodicMedium {
    pub cell: PeriodCell,
    pub shape: ShapeSpec,
    /// chi_Omega at grid nodes (true = Omega).
    chi_nodes: Vec<bool>,
    /// signed distance to M at grid nodes (positive in Omega).
    dist_nodes: Vec<f64>,
}

/// Region selector for component labeling and reference operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// Omega intersect Q with opposite faces of Q glued.
    OmegaPeriodic,
    /// Omega intersect Q without identification.
    OmegaCell,
    /// The per-cell inclusion M0 = M intersect Q.
    Inclusion,
}

impl PeriodicMedium {
    pub fn build(cell: PeriodCell, shape: ShapeSpec) -> Result<Self> {
        shape.validate()?;
        let mut medium = PeriodicMedium { cell, shape, chi_nodes: Vec::new(), dist_nodes: Vec::new() };
        let count = cell.node_count();
        medium.dist_nodes = (0..count)
            .map(|id| medium.signed_distance(&cell.node_coords(id)))
            .collect();
        medium.chi_nodes = medium.dist_nodes.iter().map(|&d| d > 0.0).collect();
        Ok(medium)
    }

    /// Exact signed distance to M, extended Z^m-periodically by
    /// nearest-image reduction; positive in Omega, zero on the boundary
    /// (which belongs to M), negative inside M.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        // reduce x - center into [-0.5, 0.5)^m
        let y: Vec<f64> = x
            .iter()
            .map(|&xd| {
                let t = xd - 0.5;
                t - t.round()
            })
            .collect();
        match self.shape {
            ShapeSpec::CenteredDisk { radius } => {
                let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                r - radius
            }
            ShapeSpec::CenteredBox { half_width } => box_sdf(&y, half_width),
            ShapeSpec::Frame { half_width } => box_sdf(&y, 0.5 - half_width),
            ShapeSpec::ThinWalls { half_width } => -box_sdf(&y, 0.5 - half_width),
        }
    }

    pub fn in_omega(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > 0.0
    }

    pub fn chi_node(&self, id: usize) -> bool {
        self.chi_nodes[id]
    }

    pub fn dist_node(&self, id: usize) -> f64 {
        self.dist_nodes[id]
    }

    /// chi_Omega at the midpoint of the edge leaving node `id` in +axis.
    pub fn chi_edge_mid(&self, id: usize, axis: usize) -> bool {
        self.in_omega(&self.edge_midpoint(id, axis))
    }

    pub fn edge_midpoint(&self, id: usize, axis: usize) -> Vec<f64> {
        let h = self.cell.spacing();
        let mut x = self.cell.node_coords(id);
        x[axis] += 0.5 * h;
        x
    }

    fn region_member(&self, region: Region, id: usize) -> bool {
        match region {
            Region::OmegaPeriodic | Region::OmegaCell => self.chi_nodes[id],
            Region::Inclusion => !self.chi_nodes[id],
        }
    }

    /// Grid-graph connected components of a region (face adjacency).
    pub fn connected_components(&self, region: Region) -> Components {
        let n = self.cell.node_count();
        let periodic = region == Region::OmegaPeriodic;
        let mut labels: Vec<Option<u32>> = vec![None; n];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..n {
            if labels[start].is_some() || !self.region_member(region, start) {
                continue;
            }
            labels[start] = Some(count);
            stack.push(start);
            while let Some(u) = stack.pop() {
                let mi = self.cell.multi_index(u);
                for axis in 0..self.cell.dim {
                    for dir in [1isize, -1] {
                        let i = mi[axis] as isize + dir;
                        let nn = self.cell.resolution as isize;
                        let (i, wrapped) = if i < 0 {
                            (nn - 1, true)
                        } else if i >= nn {
                            (0, true)
                        } else {
                            (i, false)
                        };
                        if wrapped && !periodic {
                            continue;
                        }
                        let mut mj = mi.clone();
                        mj[axis] = i as usize;
                        let v = self.cell.index(&mj);
                        if labels[v].is_none() && self.region_member(region, v) {
                            labels[v] = Some(count);
                            stack.push(v);
                        }
                    }
                }
            }
            count += 1;
        }
        Components { labels, count: count as usize }
    }

    /// Checks the model-geometry hypothesis: Omega open, periodic,
    /// connected, and containing the boundary of the period cell.
    pub fn model_hypothesis(&self) -> HypothesisReport {
        let comps = self.connected_components(Region::OmegaPeriodic);
        let omega_connected = comps.count == 1;
        // boundary of Q is the identified zero-layer of each axis
        let n = self.cell.resolution;
        let mut contains_boundary = true;
        'outer: for id in 0..self.cell.node_count() {
            let mi = self.cell.multi_index(id);
            if mi.iter().any(|&i| i == 0) && !self.chi_nodes[id] {
                contains_boundary = false;
                break 'outer;
            }
        }
        let _ = n;
        HypothesisReport {
            omega_connected,
            omega_contains_cell_boundary: contains_boundary,
        }
    }
}

/// Component labeling: `labels[node]` is Some(component id) for region
/// members, None otherwise.
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<Option<u32>>,
    pub count: usize,
}

/// Result of the hypothesis check behind the model-case spectral statements
/// (first-band limit, gap opening).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HypothesisReport {
    pub omega_connected: bool,
    pub omega_contains_cell_boundary: bool,
}

impl HypothesisReport {
    pub fn holds(&self) -> bool {
        self.omega_connected && self.omega_contains_cell_boundary
    }
}
