//! Assembly of the sparse Hermitian fiber matrices.
//!
//! The quadratic form of each operator family is discretized by finite
//! volumes on the uniform grid: every grid edge e between nodes p and q,
//! with midpoint x_e, contributes c(x_e) * h^(m-2) * |u_p - phase_e u_q|^2.
//! Quasimomentum phases exp(i theta_d) sit exactly on the edges that wrap
//! across the cell boundary, so every fiber shares one sparsity pattern.
//! Coefficients are sampled at edge midpoints, which keeps the discrete form
//! a Riemann sum of the continuum Dirichlet integral even at high contrast.

use crate::error::{Error, Result};
use crate::geometry::{PeriodicMedium, Region};
use crate::sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use serde::Serialize;

/// Smooth monotone transition used for potentials and the conformal factor.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Conformal deformation profile: equal to 1 on M, equal to 1/lambda on the
/// part of Omega at distance >= lambda^-m from M, with a C^1 monotone
/// transition in between.
pub fn conformal_factor(medium: &PeriodicMedium, lambda: f64, x: &[f64]) -> Result<f64> {
    if lambda < 1.0 {
        return Err(Error::InvalidSpec(format!(
            "conformal factor requires contrast lambda >= 1, got {lambda}"
        )));
    }
    let d = medium.signed_distance(x);
    if d <= 0.0 {
        return Ok(1.0);
    }
    let plateau = lambda.powi(-(medium.cell.dim as i32));
    let t = d / plateau;
    Ok(1.0 + (1.0 / lambda - 1.0) * smoothstep(t))
}

/// Magnetic gauge on the grid: a periodic stream function psi supported
/// strictly inside Omega gives a = (-d2 psi, d1 psi), so a vanishes on M and
/// the per-cell flux of B = curl a is zero.
#[derive(Debug, Clone, Serialize)]
pub struct Gauge {
    pub beta: f64,
    kind: GaugeKind,
    /// Discrete field at nodes: plaquette curl of the edge-sampled vector
    /// potential, anchored at the node's lower-left corner.
    #[serde(skip)]
    b_nodes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
enum GaugeKind {
    /// psi = beta (bump(x1) + bump(x2)) with bump supported within the wall
    /// half-width of the lattice hyperplanes (frame walls).
    Walls { support: f64 },
    /// psi = beta bump(|x - center|) supported in a ball inside the open box
    /// (thin-wall geometry).
    Radial { support: f64 },
}

#[cfg_attr(not(test), allow(dead_code))] // oracle for bump_prime in tests
fn bump(t: f64, w: f64) -> f64 {
    // C^2 compactly supported bump of the distance to the nearest integer,
    // scaled by w^2/6 so |bump''| peaks at 1: the field amplitude is then
    // O(beta) regardless of the wall width
    let d = t - t.round();
    let s = (d / w).abs();
    if s >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        w * w / 6.0 * q * q * q
    }
}

fn bump_prime(t: f64, w: f64) -> f64 {
    let d = t - t.round();
    let s = d / w;
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        -s * w * q * q
    }
}

impl Gauge {
    /// Builds the gauge for a frame or thin-wall medium in dimension 2.
    pub fn build(medium: &PeriodicMedium, beta: f64) -> Result<Self> {
        if medium.cell.dim != 2 {
            return Err(Error::InvalidSpec(
                "magnetic gauge is defined for m = 2 only".into(),
            ));
        }
        let h = medium.cell.spacing();
        let kind = match medium.shape {
            crate::geometry::ShapeSpec::Frame { half_width } => {
                // the vector potential vanishes at distance >= w from the
                // lattice hyperplanes, i.e. exactly on the open inclusion;
                // two grid points per support side are needed so the
                // midpoint-rule line integrals do not alias the bump to zero
                if half_width < 2.0 * h {
                    return Err(Error::InvalidSpec(format!(
                        "frame wall half-width {half_width} cannot support the gauge bump at spacing {h}"
                    )));
                }
                GaugeKind::Walls { support: half_width }
            }
            crate::geometry::ShapeSpec::ThinWalls { half_width } => {
                let s = 0.5 - half_width;
                if s < 2.0 * h {
                    return Err(Error::InvalidSpec(format!(
                        "thin-wall interior of half-width {s} cannot support the gauge bump at spacing {h}"
                    )));
                }
                GaugeKind::Radial { support: s }
            }
            other => {
                return Err(Error::InvalidSpec(format!(
                    "gauge construction requires a frame or thin-wall medium, got {other:?}"
                )));
            }
        };
        let mut gauge = Gauge { beta, kind, b_nodes: Vec::new() };
        gauge.b_nodes = gauge.plaquette_curl(medium);
        Ok(gauge)
    }

    /// Vector potential a = (-d2 psi, d1 psi) at a point.
    pub fn vector_potential(&self, x: &[f64]) -> [f64; 2] {
        match self.kind {
            GaugeKind::Walls { support } => [
                -self.beta * bump_prime(x[1], support),
                self.beta * bump_prime(x[0], support),
            ],
            GaugeKind::Radial { support } => {
                let y0 = x[0] - 0.5 - (x[0] - 0.5).round();
                let y1 = x[1] - 0.5 - (x[1] - 0.5).round();
                let r2 = y0 * y0 + y1 * y1;
                let s2 = r2 / (support * support);
                if s2 >= 1.0 {
                    return [0.0, 0.0];
                }
                // psi = beta R^2/6 (1 - r^2/R^2)^3, same |psi''| <= 1
                // normalization as the wall bump
                let q = 1.0 - s2;
                let g = -self.beta * q * q;
                [-g * y1, g * y0]
            }
        }
    }

    /// Component of a along `axis` at the midpoint of the edge leaving node
    /// `id`, times the edge length h (midpoint-rule line integral).
    pub fn edge_line_integral(&self, medium: &PeriodicMedium, id: usize, axis: usize) -> f64 {
        let x = medium.edge_midpoint(id, axis);
        self.vector_potential(&x)[axis] * medium.cell.spacing()
    }

    fn plaquette_curl(&self, medium: &PeriodicMedium) -> Vec<f64> {
        let cell = medium.cell;
        let h = cell.spacing();
        let mut b = vec![0.0; cell.node_count()];
        for id in 0..cell.node_count() {
            // plaquette anchored at node id: edges (id,+x), (id+x,+y),
            // (id+y,+x), (id,+y)
            let (px, _) = cell.neighbor(id, 0);
            let (py, _) = cell.neighbor(id, 1);
            let a_bottom = self.edge_line_integral(medium, id, 0);
            let a_right = self.edge_line_integral(medium, px, 1);
            let a_top = self.edge_line_integral(medium, py, 0);
            let a_left = self.edge_line_integral(medium, id, 1);
            b[id] = (a_bottom + a_right - a_top - a_left) / (h * h);
        }
        b
    }

    /// Discrete field at nodes.
    pub fn field(&self) -> &[f64] {
        &self.b_nodes
    }

    /// Per-cell flux sum(B) h^2; zero to rounding by construction.
    pub fn cell_flux(&self, medium: &PeriodicMedium) -> f64 {
        let h = medium.cell.spacing();
        self.b_nodes.iter().sum::<f64>() * h * h
    }
}

/// Operator families covered by the solver.
#[derive(Debug, Clone, Serialize)]
pub enum Family {
    /// -Laplace + lambda V with V >= 0 vanishing exactly on M.
    /// `potential_width` > 0 smooths the indicator over that distance.
    Schrodinger { potential_width: f64 },
    /// -div (a + lambda b chi_Omega) grad with diagonal-matrix coefficients
    /// contracted with the edge direction; a = b = identity reproduces
    /// -div (1 + lambda chi_Omega) grad.
    Divergence { a_diag: Vec<f64>, b_diag: Vec<f64> },
    /// -div (1 + lambda chi_M)^-1 grad, a decreasing family in lambda.
    DivergenceDecreasing,
    /// Laplace-Beltrami operator of the conformally deformed flat metric.
    Beltrami,
    /// Magnetic Schrodinger operator (-i grad - lambda a)^2, m = 2.
    Magnetic { gauge: Gauge },
    /// Pauli operators H(lambda a) -/+ B, m = 2.
    PauliPlus { gauge: Gauge },
    PauliMinus { gauge: Gauge },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Schrodinger { .. } => "schrodinger",
            Family::Divergence { .. } => "divergence",
            Family::DivergenceDecreasing => "divergence_decreasing",
            Family::Beltrami => "beltrami",
            Family::Magnetic { .. } => "magnetic",
            Family::PauliPlus { .. } => "pauli_plus",
            Family::PauliMinus { .. } => "pauli_minus",
        }
    }

    fn gauge(&self) -> Option<&Gauge> {
        match self {
            Family::Magnetic { gauge } | Family::PauliPlus { gauge } | Family::PauliMinus { gauge } => {
                Some(gauge)
            }
            _ => None,
        }
    }
}

/// An operator family instantiated on a medium at contrast lambda.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorSpec {
    pub family: Family,
    #[serde(skip)]
    pub medium: PeriodicMedium,
    pub lambda: f64,
}

impl OperatorSpec {
    pub fn new(family: Family, medium: PeriodicMedium, lambda: f64) -> Result<Self> {
        let spec = OperatorSpec { family, medium, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        OperatorSpec::new(self.family.clone(), self.medium.clone(), lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.medium.cell.dim;
        if self.lambda < 0.0 {
            return Err(Error::InvalidSpec(format!("contrast lambda = {} < 0", self.lambda)));
        }
        match &self.family {
            Family::Schrodinger { potential_width } => {
                if *potential_width < 0.0 {
                    return Err(Error::InvalidSpec("potential width must be >= 0".into()));
                }
            }
            Family::Divergence { a_diag, b_diag } => {
                if a_diag.len() != m || b_diag.len() != m {
                    return Err(Error::InvalidSpec(format!(
                        "divergence coefficient diagonals must have length m = {m}"
                    )));
                }
                if a_diag.iter().any(|&v| v <= 0.0) || b_diag.iter().any(|&v| v <= 0.0) {
                    return Err(Error::InvalidSpec(
                        "divergence coefficients must be positive definite".into(),
                    ));
                }
            }
            Family::DivergenceDecreasing => {}
            Family::Beltrami => {
                if m < 2 {
                    return Err(Error::InvalidSpec(
                        "the conformal family requires m >= 2".into(),
                    ));
                }
                if self.lambda < 1.0 {
                    return Err(Error::InvalidSpec(
                        "the conformal family requires lambda >= 1".into(),
                    ));
                }
            }
            Family::Magnetic { .. } | Family::PauliPlus { .. } | Family::PauliMinus { .. } => {
                if m != 2 {
                    return Err(Error::InvalidSpec(
                        "magnetic and Pauli families require m = 2".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Potential V(x) for the Schrodinger family: a smoothed indicator of
    /// Omega, exactly zero on M.
    pub fn potential(&self, x: &[f64]) -> f64 {
        match &self.family {
            Family::Schrodinger { potential_width } => {
                let d = self.medium.signed_distance(x);
                if d <= 0.0 {
                    0.0
                } else if *potential_width == 0.0 {
                    1.0
                } else {
                    smoothstep(d / potential_width)
                }
            }
            _ => 0.0,
        }
    }

    /// Scalar edge coefficient c(x_e; lambda) for the edge along `axis`.
    fn edge_weight(&self, x_mid: &[f64], axis: usize) -> f64 {
        let m = self.medium.cell.dim as i32;
        match &self.family {
            Family::Schrodinger { .. } => 1.0,
            Family::Divergence { a_diag, b_diag } => {
                let chi = if self.medium.in_omega(x_mid) { 1.0 } else { 0.0 };
                a_diag[axis] + self.lambda * b_diag[axis] * chi
            }
            Family::DivergenceDecreasing => {
                let chi_m = if self.medium.in_omega(x_mid) { 0.0 } else { 1.0 };
                1.0 / (1.0 + self.lambda * chi_m)
            }
            Family::Beltrami => conformal_factor(&self.medium, self.lambda, x_mid)
                .expect("validated lambda")
                .powi(m - 2),
            Family::Magnetic { .. } | Family::PauliPlus { .. } | Family::PauliMinus { .. } => 1.0,
        }
    }

    /// Potential averaged over the finite-volume cell of node `id` by the
    /// 2^m subcell-midpoint rule; a node cell straddling the interface of a
    /// sharp indicator gets the covered fraction instead of a point sample.
    fn potential_cell_avg(&self, id: usize) -> f64 {
        let m = self.medium.cell.dim;
        let h = self.medium.cell.spacing();
        let x = self.medium.cell.node_coords(id);
        let mut sum = 0.0;
        for corner in 0..1usize << m {
            let mut y = x.clone();
            for (axis, v) in y.iter_mut().enumerate() {
                *v += if corner >> axis & 1 == 1 { h / 4.0 } else { -h / 4.0 };
            }
            sum += self.potential(&y);
        }
        sum / (1usize << m) as f64
    }

    /// Zero-order stiffness contribution at node `id` (already mass-weighted
    /// by h^m).
    fn node_stiffness_diag(&self, id: usize) -> f64 {
        let hm = self.medium.cell.spacing().powi(self.medium.cell.dim as i32);
        match &self.family {
            Family::Schrodinger { .. } => self.lambda * self.potential_cell_avg(id) * hm,
            Family::PauliPlus { gauge } => -gauge.field()[id] * hm,
            Family::PauliMinus { gauge } => gauge.field()[id] * hm,
            _ => 0.0,
        }
    }

    /// Diagonal mass weight at node `id` (the lambda-dependent volume form
    /// for the conformal family, plain h^m otherwise).
    fn mass_diag(&self, id: usize) -> f64 {
        let m = self.medium.cell.dim as i32;
        let hm = self.medium.cell.spacing().powi(m);
        match &self.family {
            Family::Beltrami => {
                let x = self.medium.cell.node_coords(id);
                conformal_factor(&self.medium, self.lambda, &x)
                    .expect("validated lambda")
                    .powi(m)
                    * hm
            }
            _ => hm,
        }
    }
}

/// Assembled fiber problem: sparse Hermitian stiffness and positive definite
/// mass for one quasimomentum (or a reference problem without one).
pub struct AssembledFiber {
    pub theta: Option<Vec<f64>>,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    /// Grid node id of each matrix row.
    pub node_map: Vec<usize>,
}

impl AssembledFiber {
    /// Writes the stiffness in coordinate text format (row, col, re, im).
    pub fn dump_stiffness<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for i in 0..self.stiffness.dim() {
            let (cols, vals) = self.stiffness.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e} {:.17e}", i, j, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Boundary condition replacing the quasimomentum phases in the
/// Dirichlet-Neumann bracketing of the fibers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

/// Assembles the fiber problem at quasimomentum theta.
pub fn assemble_fiber(spec: &OperatorSpec, theta: &[f64]) -> Result<AssembledFiber> {
    spec.validate()?;
    let cell = spec.medium.cell;
    if theta.len() != cell.dim {
        return Err(Error::InvalidSpec(format!(
            "quasimomentum has {} components, expected {}",
            theta.len(),
            cell.dim
        )));
    }
    const PI: f64 = std::f64::consts::PI;
    for &t in theta {
        if !(-PI - 1e-12..=PI + 1e-12).contains(&t) {
            return Err(Error::InvalidSpec(format!("quasimomentum component {t} outside [-pi, pi]")));
        }
    }
    let n = cell.node_count();
    let h = cell.spacing();
    let hpow = h.powi(cell.dim as i32 - 2);
    let mut stiff = CooMatrix::new(n);
    let gauge = spec.family.gauge();
    for id in 0..n {
        for axis in 0..cell.dim {
            let (q, wrapped) = cell.neighbor(id, axis);
            let x_mid = spec.medium.edge_midpoint(id, axis);
            let c = spec.edge_weight(&x_mid, axis);
            let mut phase = if wrapped {
                Complex64::from_polar(1.0, theta[axis])
            } else {
                Complex64::new(1.0, 0.0)
            };
            if let Some(g) = gauge {
                let line = g.edge_line_integral(&spec.medium, id, axis);
                phase *= Complex64::from_polar(1.0, -spec.lambda * line);
            }
            stiff.push_edge(id, q, c * hpow, phase);
        }
        let d = spec.node_stiffness_diag(id);
        if d != 0.0 {
            stiff.push(id, id, Complex64::new(d, 0.0));
        }
    }
    let mass: Vec<f64> = (0..n).map(|id| spec.mass_diag(id)).collect();
    Ok(AssembledFiber {
        theta: Some(theta.to_vec()),
        stiffness: stiff.to_csr(),
        mass: CsrMatrix::diagonal(&mass),
        node_map: (0..n).collect(),
    })
}

/// Assembles the fiber form on Q with Neumann (wrap couplings dropped) or
/// Dirichlet (identified boundary layer pinned to zero) conditions replacing
/// the quasimomentum phases. By the min-max principle these bracket every
/// fiber eigenvalue: E_k^N <= E_k(theta) <= E_k^D.
pub fn assemble_cell_bc(spec: &OperatorSpec, bc: BoundaryCondition) -> Result<AssembledFiber> {
    spec.validate()?;
    let cell = spec.medium.cell;
    let n = cell.node_count();
    let h = cell.spacing();
    let hpow = h.powi(cell.dim as i32 - 2);
    let member: Vec<bool> = (0..n)
        .map(|id| match bc {
            BoundaryCondition::Neumann => true,
            BoundaryCondition::Dirichlet => cell.multi_index(id).iter().all(|&i| i > 0),
        })
        .collect();
    let node_map: Vec<usize> = (0..n).filter(|&id| member[id]).collect();
    let mut renum = vec![usize::MAX; n];
    for (row, &id) in node_map.iter().enumerate() {
        renum[id] = row;
    }
    let dim = node_map.len();
    if dim == 0 {
        return Err(Error::InvalidSpec("empty region after boundary pinning".into()));
    }
    let gauge = spec.family.gauge();
    let mut stiff = CooMatrix::new(dim);
    for id in 0..n {
        for axis in 0..cell.dim {
            let (q, wrapped) = cell.neighbor(id, axis);
            if wrapped && bc == BoundaryCondition::Neumann {
                continue;
            }
            let (mp, mq) = (member[id], member[q]);
            if !mp && !mq {
                continue;
            }
            let x_mid = spec.medium.edge_midpoint(id, axis);
            let c = spec.edge_weight(&x_mid, axis);
            let mut phase = Complex64::new(1.0, 0.0);
            if let Some(g) = gauge {
                let line = g.edge_line_integral(&spec.medium, id, axis);
                phase *= Complex64::from_polar(1.0, -spec.lambda * line);
            }
            let w = c * hpow;
            match (mp, mq) {
                (true, true) => stiff.push_edge(renum[id], renum[q], w, phase),
                (true, false) => stiff.push(renum[id], renum[id], Complex64::new(w, 0.0)),
                (false, true) => stiff.push(renum[q], renum[q], Complex64::new(w, 0.0)),
                (false, false) => unreachable!(),
            }
        }
        if member[id] {
            let d = spec.node_stiffness_diag(id);
            if d != 0.0 {
                stiff.push(renum[id], renum[id], Complex64::new(d, 0.0));
            }
        }
    }
    let mass: Vec<f64> = node_map.iter().map(|&id| spec.mass_diag(id)).collect();
    Ok(AssembledFiber {
        theta: None,
        stiffness: stiff.to_csr(),
        mass: CsrMatrix::diagonal(&mass),
        node_map,
    })
}

/// Reference Laplacians on the inclusion M0 or on Omega intersect Q.
///
/// Dirichlet pins all nodes outside the strict interior of the region to
/// zero, approximating the form domain from inside; Neumann keeps exactly
/// the edges with both endpoints in the region.
pub fn assemble_reference(
    medium: &PeriodicMedium,
    region: Region,
    bc: BoundaryCondition,
) -> Result<AssembledFiber> {
    let cell = medium.cell;
    let n = cell.node_count();
    let h = cell.spacing();
    let hpow = h.powi(cell.dim as i32 - 2);
    let hm = h.powi(cell.dim as i32);
    let member: Vec<bool> = (0..n)
        .map(|id| match (region, bc) {
            // strict interior for Dirichlet (boundary nodes carry the
            // pinned zero values)
            (Region::Inclusion, BoundaryCondition::Dirichlet) => medium.dist_node(id) < 0.0,
            (Region::Inclusion, BoundaryCondition::Neumann) => medium.dist_node(id) <= 0.0,
            (Region::OmegaCell | Region::OmegaPeriodic, _) => medium.dist_node(id) > 0.0,
        })
        .collect();
    let node_map: Vec<usize> = (0..n).filter(|&id| member[id]).collect();
    if node_map.is_empty() {
        return Err(Error::InvalidSpec(format!(
            "region {region:?} is empty on the grid at resolution {}",
            cell.resolution
        )));
    }
    let mut renum = vec![usize::MAX; n];
    for (row, &id) in node_map.iter().enumerate() {
        renum[id] = row;
    }
    let periodic = region == Region::OmegaPeriodic;
    let mut stiff = CooMatrix::new(node_map.len());
    for id in 0..n {
        for axis in 0..cell.dim {
            let (q, wrapped) = cell.neighbor(id, axis);
            if wrapped && !periodic {
                continue;
            }
            match (member[id], member[q], bc) {
                (true, true, _) => {
                    stiff.push_edge(renum[id], renum[q], hpow, Complex64::new(1.0, 0.0))
                }
                (true, false, BoundaryCondition::Dirichlet) => {
                    stiff.push(renum[id], renum[id], Complex64::new(hpow, 0.0))
                }
                (false, true, BoundaryCondition::Dirichlet) => {
                    stiff.push(renum[q], renum[q], Complex64::new(hpow, 0.0))
                }
                _ => {}
            }
        }
    }
    let mass = vec![hm; node_map.len()];
    Ok(AssembledFiber {
        theta: None,
        stiffness: stiff.to_csr(),
        mass: CsrMatrix::diagonal(&mass),
        node_map,
    })
}
