//! Brillouin-zone sweeps: band functions over a quasimomentum grid, band
//! intervals, gap detection, the integrated density of states, and
//! Dirichlet-Neumann enclosures of the bands.
//!
//! Bands are per-theta sorted eigenvalues; no continuity tracking across
//! theta is attempted, since intervals and the i.d.s. are tracking-free.

use crate::assembly::{assemble_cell_bc, assemble_fiber, BoundaryCondition, OperatorSpec};
use crate::eigensolve::{smallest_eigenpairs, SolveOptions};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Relative merge tolerance for gap bookkeeping: gaps narrower than
/// `GAP_MERGE_REL * ceiling` are suppressed as numerical artifacts.
pub const GAP_MERGE_REL: f64 = 1e-6;

/// Uniform tensor grid of quasimomenta in (-pi, pi]^m.
///
/// The per-axis samples are spaced 2 pi / (n_theta - 1) apart; the endpoint
/// -pi is identified with +pi (the two fibers coincide), so each axis carries
/// n_theta - 1 distinct values including 0 and pi. `n_theta` must be odd so
/// that 0 is on the grid.
#[derive(Debug, Clone, Serialize)]
pub struct BrillouinGrid {
    pub dim: usize,
    pub n_theta: usize,
    axis: Vec<f64>,
    #[serde(skip)]
    points: Vec<Vec<f64>>,
}

impl BrillouinGrid {
    pub fn new(dim: usize, n_theta: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidSpec(format!("grid dimension {dim} outside 1..=3")));
        }
        if n_theta < 3 || n_theta % 2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "per-axis sample count n_theta = {n_theta} must be odd and >= 3"
            )));
        }
        let per = n_theta - 1;
        let axis: Vec<f64> = (1..=per).map(|j| -PI + 2.0 * PI * j as f64 / per as f64).collect();
        let mut points = Vec::with_capacity(per.pow(dim as u32));
        let mut idx = vec![0usize; dim];
        loop {
            points.push(idx.iter().map(|&i| axis[i]).collect());
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < per {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == dim {
                    return Ok(BrillouinGrid { dim, n_theta, axis, points });
                }
            }
        }
    }

    /// Distinct per-axis sample values in (-pi, pi].
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// All grid points, ordered with axis 0 fastest.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Band functions of one operator over a Brillouin grid.
#[derive(Debug, Clone, Serialize)]
pub struct BandStructure {
    pub lambda: f64,
    pub grid: BrillouinGrid,
    pub num_bands: usize,
    /// `energies[j][k]`: k-th eigenvalue (ascending) at grid point j.
    pub energies: Vec<Vec<f64>>,
}

impl BandStructure {
    /// Band interval [min_theta E_k, max_theta E_k], k zero-based.
    pub fn band_interval(&self, k: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.energies {
            lo = lo.min(row[k]);
            hi = hi.max(row[k]);
        }
        (lo, hi)
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        (0..self.num_bands).map(|k| self.band_interval(k)).collect()
    }

    /// Minimum over theta of the topmost computed band: energies above this
    /// value may belong to bands beyond `num_bands` and are untrusted.
    pub fn trusted_ceiling(&self) -> f64 {
        self.band_interval(self.num_bands - 1).0
    }
}

/// Computes the lowest `k_max` band functions of `spec` over `grid`.
///
/// Fibers are solved in parallel over immutable state and reduced in grid
/// order, so the result is deterministic.
pub fn band_structure(
    spec: &OperatorSpec,
    grid: &BrillouinGrid,
    k_max: usize,
    opts: &SolveOptions,
) -> Result<BandStructure> {
    if k_max == 0 {
        return Err(Error::InvalidSpec("k_max must be >= 1".into()));
    }
    let energies: Vec<Vec<f64>> = grid
        .points()
        .par_iter()
        .map(|theta| -> Result<Vec<f64>> {
            let wrap = |e: Error| Error::FiberSolve {
                theta: theta.clone(),
                lambda: spec.lambda,
                source: Box::new(e),
            };
            let fiber = assemble_fiber(spec, theta).map_err(wrap)?;
            let r = smallest_eigenpairs(&fiber.stiffness, &fiber.mass, k_max, opts)
                .map_err(wrap)?;
            Ok(r.eigenvalues)
        })
        .collect::<Result<_>>()?;
    Ok(BandStructure { lambda: spec.lambda, grid: grid.clone(), num_bands: k_max, energies })
}

/// Gap report: the complement of the band intervals within [0, ceiling].
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct GapReport {
    pub lambda: f64,
    /// Ceiling actually used; clipped to the trusted window when the
    /// requested one exceeds what `num_bands` bands can certify.
    pub ceiling: f64,
    pub clipped: bool,
    /// Open intervals (a, b) free of spectrum.
    pub gaps: Vec<(f64, f64)>,
    /// Band intervals merged up to the tolerance, clipped at the ceiling.
    pub bands: Vec<(f64, f64)>,
}

/// Detects spectral gaps below `ceiling`.
///
/// A band interval is only trusted below the topmost computed band's minimum
/// over theta; a requested ceiling above that is clipped (and flagged) to
/// avoid reporting false gaps past the computed window. Touching or
/// overlapping intervals are merged with tolerance `GAP_MERGE_REL * ceiling`,
/// and gaps narrower than the tolerance are dropped.
pub fn detect_gaps(bands: &BandStructure, ceiling: f64) -> GapReport {
    let trusted = bands.trusted_ceiling();
    let (ceiling, clipped) = if trusted < ceiling { (trusted, true) } else { (ceiling, false) };
    let eta = GAP_MERGE_REL * ceiling.max(f64::MIN_POSITIVE);
    let mut ivals: Vec<(f64, f64)> = bands
        .intervals()
        .into_iter()
        .filter(|&(lo, _)| lo < ceiling)
        .map(|(lo, hi)| (lo, hi.min(ceiling)))
        .collect();
    ivals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in ivals {
        match merged.last_mut() {
            Some(last) if lo <= last.1 + eta => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let mut gaps = Vec::new();
    let mut cursor = 0.0_f64;
    for &(lo, hi) in &merged {
        if lo - cursor > eta {
            gaps.push((cursor, lo));
        }
        cursor = cursor.max(hi);
    }
    if ceiling - cursor > eta {
        gaps.push((cursor, ceiling));
    }
    GapReport { lambda: bands.lambda, ceiling, clipped, gaps, bands: merged }
}

/// One evaluation of the integrated density of states.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdsValue {
    pub energy: f64,
    /// Per-unit-cell eigenvalue count below `energy`, averaged over theta.
    pub value: f64,
    /// False when `energy` exceeds the trusted window of the band data, in
    /// which case bands beyond the computed ones may be missing from the
    /// count.
    pub trusted: bool,
}

/// Integrated density of states F(E) with per-unit-cell normalization:
/// F(E) = (1 / #theta-points) sum_j #{k : E_k(theta_j) <= E}.
pub fn ids(bands: &BandStructure, energy: f64) -> IdsValue {
    if energy < 0.0 {
        return IdsValue { energy, value: 0.0, trusted: true };
    }
    let total: usize = bands
        .energies
        .iter()
        .map(|row| row.iter().filter(|&&e| e <= energy).count())
        .sum();
    IdsValue {
        energy,
        value: total as f64 / bands.energies.len() as f64,
        trusted: energy <= bands.trusted_ceiling(),
    }
}

/// i.d.s. evaluated on a list of abscissae (a nondecreasing step function).
pub fn ids_curve(bands: &BandStructure, energies: &[f64]) -> Vec<IdsValue> {
    energies.iter().map(|&e| ids(bands, e)).collect()
}

/// Dirichlet-Neumann enclosures of the band functions.
#[derive(Debug, Clone, Serialize)]
pub struct BracketPairs {
    pub lambda: f64,
    /// E_k^N: fiber form with wrap couplings dropped (lower bounds).
    pub neumann: Vec<f64>,
    /// E_k^D: fiber form with the identified boundary layer pinned
    /// (upper bounds).
    pub dirichlet: Vec<f64>,
}

/// Computes the Neumann and Dirichlet substitutes for the quasimomentum
/// phases; by the min-max principle, E_k^N <= E_k(theta) <= E_k^D for every
/// theta and k.
pub fn bracketing(spec: &OperatorSpec, k_max: usize, opts: &SolveOptions) -> Result<BracketPairs> {
    let neu = assemble_cell_bc(spec, BoundaryCondition::Neumann)?;
    let dir = assemble_cell_bc(spec, BoundaryCondition::Dirichlet)?;
    let rn = smallest_eigenpairs(&neu.stiffness, &neu.mass, k_max, opts)?;
    let rd = smallest_eigenpairs(&dir.stiffness, &dir.mass, k_max, opts)?;
    Ok(BracketPairs { lambda: spec.lambda, neumann: rn.eigenvalues, dirichlet: rd.eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::Family;
    use crate::geometry::{PeriodCell, PeriodicMedium, ShapeSpec};

    fn free_spec(dim: usize, n: usize) -> OperatorSpec {
        let medium = PeriodicMedium::build(
            PeriodCell::new(dim, n).unwrap(),
            ShapeSpec::Frame { half_width: 0.125 },
        )
        .unwrap();
        OperatorSpec::new(
            Family::Divergence { a_diag: vec![1.0; dim], b_diag: vec![1.0; dim] },
            medium,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn grid_contains_zero_and_corner() {
        let g = BrillouinGrid::new(2, 9).unwrap();
        assert_eq!(g.axis().len(), 8);
        assert_eq!(g.len(), 64);
        assert!(g.points().iter().any(|p| p.iter().all(|&t| t == 0.0)));
        assert!(g.points().iter().any(|p| p.iter().all(|&t| (t - PI).abs() < 1e-15)));
        // reflection symmetry up to the -pi ~ pi identification
        for p in g.points() {
            let refl: Vec<f64> = p.iter().map(|&t| if t == PI { PI } else { -t }).collect();
            assert!(
                g.points().iter().any(|q| q
                    .iter()
                    .zip(&refl)
                    .all(|(a, b)| (a - b).abs() < 1e-14)),
                "missing reflection of {p:?}"
            );
        }
    }

    #[test]
    fn grid_rejects_bad_counts() {
        assert!(BrillouinGrid::new(2, 4).is_err());
        assert!(BrillouinGrid::new(2, 1).is_err());
        assert!(BrillouinGrid::new(0, 5).is_err());
    }

    #[test]
    fn free_1d_dispersion_closed_form() {
        // one-dimensional free fiber: E_1(theta) = 4 n^2 sin^2(theta / (2n)),
        // which is theta^2 + O(theta^4 / n^2) for small theta
        let n = 64;
        let spec = free_spec(1, n);
        let grid = BrillouinGrid::new(1, 17).unwrap();
        let bands = band_structure(&spec, &grid, 1, &SolveOptions::default()).unwrap();
        for (j, theta) in grid.points().iter().enumerate() {
            let t = theta[0];
            let exact = 4.0 * (n * n) as f64 * (t / (2.0 * n as f64)).sin().powi(2);
            assert!(
                (bands.energies[j][0] - exact).abs() < 1e-8 * (1.0 + exact),
                "theta = {t}: got {} want {exact}",
                bands.energies[j][0]
            );
            if t.abs() < 1.0 {
                assert!((bands.energies[j][0] - t * t).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn free_2d_has_no_gaps() {
        let spec = free_spec(2, 16);
        let grid = BrillouinGrid::new(2, 5).unwrap();
        let bands = band_structure(&spec, &grid, 8, &SolveOptions::default()).unwrap();
        let report = detect_gaps(&bands, 30.0);
        assert!(!report.clipped, "trusted ceiling {}", bands.trusted_ceiling());
        assert!(report.gaps.is_empty(), "unexpected gaps {:?}", report.gaps);
        // the first band has the constant kernel at theta = 0
        assert!(bands.band_interval(0).0.abs() < 1e-9);
    }

    #[test]
    fn theta_reflection_symmetry() {
        let medium = PeriodicMedium::build(
            PeriodCell::new(2, 12).unwrap(),
            ShapeSpec::CenteredDisk { radius: 0.3 },
        )
        .unwrap();
        let spec = OperatorSpec::new(
            Family::Divergence { a_diag: vec![1.0, 2.0], b_diag: vec![1.0, 1.0] },
            medium,
            7.0,
        )
        .unwrap();
        let opts = SolveOptions::default();
        for theta in [[0.7, -1.3], [2.1, 0.4]] {
            let f1 = assemble_fiber(&spec, &theta).unwrap();
            let f2 = assemble_fiber(&spec, &[-theta[0], -theta[1]]).unwrap();
            let r1 = smallest_eigenpairs(&f1.stiffness, &f1.mass, 4, &opts).unwrap();
            let r2 = smallest_eigenpairs(&f2.stiffness, &f2.mass, 4, &opts).unwrap();
            for k in 0..4 {
                assert!((r1.eigenvalues[k] - r2.eigenvalues[k]).abs() < 1e-8
                    * (1.0 + r1.eigenvalues[k].abs()));
            }
        }
    }

    #[test]
    fn bracketing_encloses_bands() {
        let medium = PeriodicMedium::build(
            PeriodCell::new(2, 16).unwrap(),
            ShapeSpec::Frame { half_width: 0.125 },
        )
        .unwrap();
        let spec = OperatorSpec::new(
            Family::Divergence { a_diag: vec![1.0, 1.0], b_diag: vec![1.0, 1.0] },
            medium,
            10.0,
        )
        .unwrap();
        let opts = SolveOptions::default();
        let k = 5;
        let br = bracketing(&spec, k, &opts).unwrap();
        assert!(br.neumann[0].abs() < 1e-9); // constants are the Neumann kernel
        let grid = BrillouinGrid::new(2, 5).unwrap();
        let bands = band_structure(&spec, &grid, k, &opts).unwrap();
        let slack = 1e-9;
        for row in &bands.energies {
            for i in 0..k {
                assert!(
                    br.neumann[i] <= row[i] + slack * (1.0 + row[i].abs()),
                    "Neumann bound violated at band {i}: {} > {}",
                    br.neumann[i],
                    row[i]
                );
                assert!(
                    row[i] <= br.dirichlet[i] + slack * (1.0 + br.dirichlet[i].abs()),
                    "Dirichlet bound violated at band {i}: {} > {}",
                    row[i],
                    br.dirichlet[i]
                );
            }
        }
    }

    #[test]
    fn ids_properties() {
        let spec = free_spec(2, 12);
        let grid = BrillouinGrid::new(2, 5).unwrap();
        let bands = band_structure(&spec, &grid, 6, &SolveOptions::default()).unwrap();
        assert_eq!(ids(&bands, -1.0).value, 0.0);
        // monotone nondecreasing
        let abscissae: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let curve = ids_curve(&bands, &abscissae);
        for w in curve.windows(2) {
            assert!(w[1].value >= w[0].value);
        }
        // above the trusted window the value is flagged
        let high = ids(&bands, bands.trusted_ceiling() + 1.0);
        assert!(!high.trusted);
    }

    #[test]
    fn ids_constant_on_gap() {
        // strong-contrast frame: a gap opens after the first band
        let medium = PeriodicMedium::build(
            PeriodCell::new(2, 24).unwrap(),
            ShapeSpec::Frame { half_width: 0.125 },
        )
        .unwrap();
        let spec = OperatorSpec::new(
            Family::Divergence { a_diag: vec![1.0, 1.0], b_diag: vec![1.0, 1.0] },
            medium,
            1e4,
        )
        .unwrap();
        let grid = BrillouinGrid::new(2, 5).unwrap();
        let bands = band_structure(&spec, &grid, 6, &SolveOptions::default()).unwrap();
        let report = detect_gaps(&bands, bands.trusted_ceiling());
        assert!(!report.gaps.is_empty(), "expected a gap, bands {:?}", report.bands);
        let (a, b) = report.gaps[0];
        let fa = ids(&bands, a + 1e-9 * (1.0 + a.abs()));
        let fb = ids(&bands, b - 1e-9 * (1.0 + b.abs()));
        assert_eq!(fa.value, fb.value);
    }

    #[test]
    fn single_band_gap_to_ceiling() {
        let bands = BandStructure {
            lambda: 0.0,
            grid: BrillouinGrid::new(1, 3).unwrap(),
            num_bands: 1,
            energies: vec![vec![0.5], vec![1.0]],
        };
        // trusted ceiling is 0.5, so a requested ceiling of 2 is clipped
        let report = detect_gaps(&bands, 2.0);
        assert!(report.clipped);
        assert_eq!(report.ceiling, 0.5);
        // with a ceiling below the band, the whole window is spectrum-free
        let report = detect_gaps(&bands, 0.4);
        assert!(!report.clipped);
        assert!(report.bands.is_empty());
        assert_eq!(report.gaps, vec![(0.0, 0.4)]);
    }
}
