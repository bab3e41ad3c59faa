//! High-contrast sweeps and their verdicts: concentration of bands at the
//! reference spectrum of the inclusion, gap opening and persistence along a
//! contrast ladder, the nonzero-integral criterion for higher gaps, the
//! Neumann limit of the conformal family, supersymmetric pairing of the two
//! Pauli operators, and the decreasing divergence family.

use crate::assembly::{assemble_reference, BoundaryCondition, Family, Gauge, OperatorSpec};
use crate::bloch::{band_structure, bracketing, detect_gaps, BandStructure, BracketPairs, BrillouinGrid, GapReport};
use crate::eigensolve::{b_inner, smallest_eigenpairs, SolveOptions};
use crate::error::{Error, Result};
use crate::geometry::{PeriodicMedium, Region};
use num_complex::Complex64;
use serde::Serialize;

/// Relative width for grouping a degenerate reference eigenvalue cluster.
pub const CLUSTER_REL_WIDTH: f64 = 1e-6;

/// Relative kernel tolerance: eigenvalues below `KERNEL_REL_TOL * ceiling`
/// count as kernel when comparing the paired spectra.
pub const KERNEL_REL_TOL: f64 = 1e-8;

/// Projection-norm threshold separating "holds" from "fails" in the
/// nonzero-integral criterion.
pub const CRITERION_THRESHOLD: f64 = 1e-4;

/// Which reference spectrum of the inclusion a sweep concentrates at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReferenceKind {
    DirichletInclusion,
    NeumannInclusion,
}

/// Result of a contrast ladder sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub lambdas: Vec<f64>,
    pub band_structures: Vec<BandStructure>,
    pub gap_reports: Vec<GapReport>,
    /// Reference eigenvalues of the inclusion, computed on the same grid.
    pub reference: Vec<f64>,
    pub reference_kind: ReferenceKind,
    pub ceiling: f64,
    /// Concentration window: the ceiling, pulled down to the midpoint
    /// between the last reference value below it and the first one above,
    /// so that band points near the ceiling are not penalized against
    /// limit points that lie just outside the window.
    pub window: f64,
    /// d(lambda): max over band values E <= window of the distance from E to
    /// {0} union the reference set (0 included because the first band always
    /// reaches the kernel of the theta = 0 fiber).
    pub concentration: Vec<f64>,
    /// coverage[i][k]: distance from the k-th reference value (<= window) to
    /// the nearest band point at ladder position i.
    pub coverage: Vec<Vec<f64>>,
    /// Dirichlet-Neumann enclosures per ladder point (populated by the
    /// conformal-family sweep).
    pub brackets: Vec<BracketPairs>,
    /// Set on two-dimensional conformal-family sweeps, where the continuum
    /// limit statement is not available and results are diagnostic only.
    pub exploratory: bool,
}

fn dist_to_set(e: f64, set: &[f64]) -> f64 {
    set.iter().map(|&r| (e - r).abs()).fold(f64::INFINITY, f64::min)
}

/// Reference spectrum of the inclusion on the medium's own grid, extended
/// until it covers `ceiling` (or the matrix dimension is exhausted).
pub fn reference_spectrum(
    medium: &PeriodicMedium,
    bc: BoundaryCondition,
    ceiling: f64,
    k_hint: usize,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let asm = assemble_reference(medium, Region::Inclusion, bc)?;
    let dim = asm.stiffness.dim();
    let mut k = k_hint.max(1).min(dim.saturating_sub(1)).max(1);
    loop {
        let r = smallest_eigenpairs(&asm.stiffness, &asm.mass, k, opts)?;
        if r.eigenvalues.last().copied().unwrap_or(f64::INFINITY) > ceiling || k + 1 >= dim {
            return Ok(r.eigenvalues);
        }
        k = (2 * k).min(dim - 1);
    }
}

fn sweep_core(
    template: &OperatorSpec,
    ladder: &[f64],
    grid: &BrillouinGrid,
    k_max: usize,
    ceiling: f64,
    reference_kind: ReferenceKind,
    with_brackets: bool,
    opts: &SolveOptions,
) -> Result<SweepReport> {
    if ladder.is_empty() {
        return Err(Error::InvalidSpec("contrast ladder is empty".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("contrast ladder must be strictly increasing".into()));
    }
    let bc = match reference_kind {
        ReferenceKind::DirichletInclusion => BoundaryCondition::Dirichlet,
        ReferenceKind::NeumannInclusion => BoundaryCondition::Neumann,
    };
    let reference = reference_spectrum(&template.medium, bc, ceiling, k_max, opts)?;
    // stay away from the ceiling by half the local reference spacing: band
    // values past the midpoint to the next reference above the ceiling are
    // heading for a limit point outside the window and would bias the metric
    let last_below =
        reference.iter().copied().filter(|&r| r <= ceiling).fold(0.0_f64, f64::max);
    let next_above = reference.iter().copied().find(|&r| r > ceiling);
    let window = match next_above {
        Some(up) => ceiling.min(0.5 * (last_below + up)),
        None => ceiling,
    };
    let mut target: Vec<f64> = vec![0.0];
    target.extend(reference.iter().copied());
    let covered: Vec<f64> = reference.iter().copied().filter(|&r| r <= window).collect();

    let mut band_structures = Vec::with_capacity(ladder.len());
    let mut gap_reports = Vec::with_capacity(ladder.len());
    let mut concentration = Vec::with_capacity(ladder.len());
    let mut coverage = Vec::with_capacity(ladder.len());
    let mut brackets = Vec::new();
    for &lambda in ladder {
        let spec = template.with_lambda(lambda)?;
        let bands = band_structure(&spec, grid, k_max, opts)?;
        let trusted = bands.trusted_ceiling();
        let mut d = 0.0_f64;
        for row in &bands.energies {
            for &e in row {
                if e <= window.min(trusted) {
                    d = d.max(dist_to_set(e, &target));
                }
            }
        }
        let cov: Vec<f64> = covered
            .iter()
            .map(|&r| {
                bands
                    .energies
                    .iter()
                    .flat_map(|row| row.iter())
                    .map(|&e| (e - r).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        gap_reports.push(detect_gaps(&bands, ceiling));
        concentration.push(d);
        coverage.push(cov);
        if with_brackets {
            brackets.push(bracketing(&spec, k_max, opts)?);
        }
        band_structures.push(bands);
    }
    Ok(SweepReport {
        lambdas: ladder.to_vec(),
        band_structures,
        gap_reports,
        reference,
        reference_kind,
        ceiling,
        window,
        concentration,
        coverage,
        brackets,
        exploratory: false,
    })
}

/// Contrast sweep against the Dirichlet spectrum of the inclusion.
pub fn lambda_sweep(
    template: &OperatorSpec,
    ladder: &[f64],
    grid: &BrillouinGrid,
    k_max: usize,
    ceiling: f64,
    opts: &SolveOptions,
) -> Result<SweepReport> {
    sweep_core(template, ladder, grid, k_max, ceiling, ReferenceKind::DirichletInclusion, false, opts)
}

/// Per-reference-value gap-opening record extracted from a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct GapOpening {
    /// Reference eigenvalue whose neighborhood the gap's lower endpoint hits.
    pub reference: f64,
    /// Smallest ladder contrast from which the gap persists to the end of
    /// the ladder; `None` when no such contrast exists.
    pub lambda_star: Option<f64>,
    /// The matched gap interval at the largest ladder contrast.
    pub interval_at_max: Option<(f64, f64)>,
    /// Whether the matched gaps at consecutive ladder points overlap.
    pub persistent_overlap: bool,
}

fn matched_gap(report: &GapReport, reference: f64, rel_tol: f64) -> Option<(f64, f64)> {
    report
        .gaps
        .iter()
        .copied()
        .find(|&(a, _)| (a - reference).abs() <= rel_tol * reference.abs().max(f64::MIN_POSITIVE))
}

/// Scans the sweep for gaps whose lower endpoint tracks a reference
/// eigenvalue, and reports from which contrast each persists.
pub fn gap_opening(report: &SweepReport, rel_tol: f64) -> Vec<GapOpening> {
    let mut out = Vec::new();
    for &r in report.reference.iter().filter(|&&r| r <= report.ceiling) {
        let matches: Vec<Option<(f64, f64)>> =
            report.gap_reports.iter().map(|g| matched_gap(g, r, rel_tol)).collect();
        // smallest ladder index from which every later point has a match
        let mut lambda_star = None;
        for start in 0..matches.len() {
            if matches[start..].iter().all(|m| m.is_some()) {
                lambda_star = Some(report.lambdas[start]);
                let tail: Vec<(f64, f64)> =
                    matches[start..].iter().map(|m| m.unwrap()).collect();
                let persistent_overlap =
                    tail.windows(2).all(|w| w[0].1 > w[1].0 && w[1].1 > w[0].0);
                out.push(GapOpening {
                    reference: r,
                    lambda_star,
                    interval_at_max: tail.last().copied(),
                    persistent_overlap,
                });
                break;
            }
        }
        if lambda_star.is_none() {
            out.push(GapOpening {
                reference: r,
                lambda_star: None,
                interval_at_max: None,
                persistent_overlap: false,
            });
        }
    }
    out
}

/// Verdict of the nonzero-integral criterion for the k-th Dirichlet
/// eigenvalue of the inclusion.
#[derive(Debug, Clone, Serialize)]
pub enum CriterionVerdict {
    /// Some eigenfunction in the cluster has nonzero integral; a gap opens
    /// above this eigenvalue in the high-contrast limit.
    Holds { witness: f64 },
    /// Every eigenfunction in the cluster integrates to zero.
    Fails { witness: f64 },
    /// The cluster boundary could not be separated from the next eigenvalue
    /// at solver resolution.
    Indeterminate { witness: f64, boundary_gap: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub k: usize,
    pub eigenvalue: f64,
    /// One-based index range of the degenerate cluster containing k.
    pub cluster: (usize, usize),
    pub verdict: CriterionVerdict,
}

/// Tests whether the eigenspace of the k-th Dirichlet eigenvalue (one-based,
/// counted with multiplicity) of the inclusion contains a function with
/// nonzero integral, via the norm of the projection of the constant function.
pub fn higher_gap_criterion(
    medium: &PeriodicMedium,
    k: usize,
    opts: &SolveOptions,
) -> Result<CriterionReport> {
    if k == 0 {
        return Err(Error::InvalidSpec("criterion index k is one-based".into()));
    }
    let asm = assemble_reference(medium, Region::Inclusion, BoundaryCondition::Dirichlet)?;
    let dim = asm.stiffness.dim();
    let want = (k + 6).min(dim.saturating_sub(1));
    if want < k {
        return Err(Error::InvalidSpec(format!(
            "inclusion grid too coarse for k = {k} (only {dim} interior nodes)"
        )));
    }
    let r = smallest_eigenpairs(&asm.stiffness, &asm.mass, want, opts)?;
    let ev = &r.eigenvalues;
    let target = ev[k - 1];
    let tol = CLUSTER_REL_WIDTH * target.abs().max(1.0);
    let mut lo = k - 1;
    while lo > 0 && (ev[lo - 1] - target).abs() <= tol {
        lo -= 1;
    }
    let mut hi = k - 1;
    while hi + 1 < ev.len() && (ev[hi + 1] - target).abs() <= tol {
        hi += 1;
    }
    // constant function on the inclusion nodes
    let ones = vec![Complex64::new(1.0, 0.0); dim];
    let ones_norm = b_inner(&asm.mass, &ones, &ones).re.sqrt();
    let mut proj2 = 0.0;
    for j in lo..=hi {
        proj2 += b_inner(&asm.mass, &r.eigenvectors[j], &ones).norm_sqr();
    }
    let witness = proj2.sqrt() / ones_norm;
    // ambiguity: the next eigenvalue outside the cluster sits too close to
    // the cluster edge to trust the grouping
    let boundary_gap = if hi + 1 < ev.len() {
        ev[hi + 1] - ev[hi]
    } else {
        f64::INFINITY
    };
    let verdict = if hi + 1 == ev.len() || boundary_gap <= 10.0 * tol {
        CriterionVerdict::Indeterminate { witness, boundary_gap }
    } else if witness > CRITERION_THRESHOLD {
        CriterionVerdict::Holds { witness }
    } else {
        CriterionVerdict::Fails { witness }
    };
    Ok(CriterionReport { k, eigenvalue: target, cluster: (lo + 1, hi + 1), verdict })
}

/// Contrast sweep of the conformal family against the Neumann spectrum of
/// the inclusion, with Dirichlet-Neumann enclosures recorded per ladder
/// point. Two-dimensional runs are flagged exploratory: the limit statement
/// holds for m >= 3.
pub fn beltrami_neumann_limit(
    medium: &PeriodicMedium,
    ladder: &[f64],
    grid: &BrillouinGrid,
    k_max: usize,
    ceiling: f64,
    opts: &SolveOptions,
) -> Result<SweepReport> {
    let lambda0 = *ladder.first().ok_or_else(|| Error::InvalidSpec("contrast ladder is empty".into()))?;
    let template = OperatorSpec::new(Family::Beltrami, medium.clone(), lambda0)?;
    let mut report = sweep_core(
        &template,
        ladder,
        grid,
        k_max,
        ceiling,
        ReferenceKind::NeumannInclusion,
        true,
        opts,
    )?;
    report.exploratory = medium.cell.dim == 2;
    Ok(report)
}

/// Pairing of the two Pauli spectra at one contrast.
#[derive(Debug, Clone, Serialize)]
pub struct SusyReport {
    pub lambda: f64,
    pub beta: f64,
    /// Hausdorff distance between the nonzero parts of the two fiber
    /// spectra, collected over the whole theta-grid below the trusted cap.
    pub distance: f64,
    /// Eigenvalues below this count as kernel and are excluded.
    pub kernel_tol: f64,
    /// Eigenvalues above this cap may miss partners outside the computed
    /// window and are excluded from the comparison.
    pub trusted_cap: f64,
}

fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_sided = |x: &[f64], y: &[f64]| {
        x.iter().map(|&v| dist_to_set(v, y)).fold(0.0_f64, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Compares the spectra of the two Pauli operators H(lambda a) -/+ B over a
/// theta-grid: away from their kernels they coincide for the continuum
/// operators, so the reported distance is a pure discretization defect and
/// must shrink under grid refinement.
pub fn supersymmetry_check(
    medium: &PeriodicMedium,
    beta: f64,
    lambda: f64,
    grid: &BrillouinGrid,
    k_max: usize,
    opts: &SolveOptions,
) -> Result<SusyReport> {
    let gauge = Gauge::build(medium, beta)?;
    let plus = OperatorSpec::new(Family::PauliPlus { gauge: gauge.clone() }, medium.clone(), lambda)?;
    let minus = OperatorSpec::new(Family::PauliMinus { gauge }, medium.clone(), lambda)?;
    let bp = band_structure(&plus, grid, k_max, opts)?;
    let bm = band_structure(&minus, grid, k_max, opts)?;
    let trusted_cap = bp.trusted_ceiling().min(bm.trusted_ceiling());
    let kernel_tol = KERNEL_REL_TOL * trusted_cap.abs().max(1.0);
    let collect = |b: &BandStructure| -> Vec<f64> {
        let mut v: Vec<f64> = b
            .energies
            .iter()
            .flat_map(|row| row.iter().copied())
            .filter(|&e| e > kernel_tol && e <= trusted_cap)
            .collect();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v
    };
    let distance = hausdorff(&collect(&bp), &collect(&bm));
    Ok(SusyReport { lambda, beta, distance, kernel_tol, trusted_cap })
}

/// Behavior of the decreasing divergence family along a contrast ladder.
#[derive(Debug, Clone, Serialize)]
pub struct DecreasingReport {
    pub lambdas: Vec<f64>,
    pub band_structures: Vec<BandStructure>,
    /// Eigenvalues nonincreasing in lambda at every fixed (theta, band),
    /// up to solver tolerance.
    pub monotone: bool,
    pub max_violation: f64,
    /// Per ladder point: number of bands whose entire interval lies below
    /// the near-zero threshold (states trapped on the inclusion).
    pub near_zero_counts: Vec<usize>,
    pub near_zero_tol: f64,
}

/// Sweeps the decreasing family and checks eigenvalue monotonicity; also
/// counts the emerging cluster of near-zero bands. Diagnostic only: no
/// quantitative limit is asserted.
pub fn decreasing_family_probe(
    medium: &PeriodicMedium,
    ladder: &[f64],
    grid: &BrillouinGrid,
    k_max: usize,
    opts: &SolveOptions,
) -> Result<DecreasingReport> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("contrast ladder must be nonempty and strictly increasing".into()));
    }
    let mut band_structures = Vec::with_capacity(ladder.len());
    for &lambda in ladder {
        let spec = OperatorSpec::new(Family::DivergenceDecreasing, medium.clone(), lambda)?;
        band_structures.push(band_structure(&spec, grid, k_max, opts)?);
    }
    let mut max_violation = 0.0_f64;
    for w in band_structures.windows(2) {
        for (row0, row1) in w[0].energies.iter().zip(&w[1].energies) {
            for (e0, e1) in row0.iter().zip(row1) {
                max_violation = max_violation.max(e1 - e0);
            }
        }
    }
    let scale = band_structures[0].trusted_ceiling().abs().max(1.0);
    let monotone = max_violation <= 1e-8 * scale;
    let near_zero_tol = 1e-3 * scale;
    let near_zero_counts = band_structures
        .iter()
        .map(|b| b.intervals().iter().filter(|&&(_, hi)| hi < near_zero_tol).count())
        .collect();
    Ok(DecreasingReport {
        lambdas: ladder.to_vec(),
        band_structures,
        monotone,
        max_violation,
        near_zero_counts,
        near_zero_tol,
    })
}
