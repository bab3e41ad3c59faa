//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line with the measured quantities before asserting.
//!
//! The heavyweight contrast sweep (frame inclusion, n = 64, five contrasts)
//! is computed once and shared by the criteria that consume it.

use std::sync::OnceLock;

use blochband::assembly::{
    assemble_fiber, BoundaryCondition, Family, Gauge, OperatorSpec,
};
use blochband::asymptotics::{
    beltrami_neumann_limit, decreasing_family_probe, gap_opening, higher_gap_criterion,
    lambda_sweep, reference_spectrum, supersymmetry_check, CriterionVerdict, SweepReport,
};
use blochband::bloch::{band_structure, bracketing, detect_gaps, ids, BrillouinGrid};
use blochband::config::RunConfig;
use blochband::eigensolve::{dense_oracle, smallest_eigenpairs, SolveOptions};
use blochband::geometry::{PeriodCell, PeriodicMedium, ShapeSpec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion:2} ({name}): {} -- {detail}",
        if ok { "pass" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn frame_medium(dim: usize, n: usize, half_width: f64) -> PeriodicMedium {
    PeriodicMedium::build(PeriodCell::new(dim, n).unwrap(), ShapeSpec::Frame { half_width })
        .unwrap()
}

fn divergence(medium: PeriodicMedium, lambda: f64) -> OperatorSpec {
    let m = medium.cell.dim;
    OperatorSpec::new(
        Family::Divergence { a_diag: vec![1.0; m], b_diag: vec![1.0; m] },
        medium,
        lambda,
    )
    .unwrap()
}

/// Contrast ladder sweep shared by criteria 4, 5, 6, 7 and 8: two-component
/// frame medium (wall half-width 0.125) on n = 64, seven bands, 5x5
/// quasimomentum grid (16 distinct fibers).
const SWEEP_LADDER: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];
const SWEEP_CEILING: f64 = 160.0;
const SWEEP_K_MAX: usize = 7;

fn shared_sweep() -> &'static SweepReport {
    static SWEEP: OnceLock<SweepReport> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let template = divergence(frame_medium(2, 64, 0.125), 1.0);
        let grid = BrillouinGrid::new(2, 5).unwrap();
        lambda_sweep(&template, &SWEEP_LADDER, &grid, SWEEP_K_MAX, SWEEP_CEILING, &opts())
            .expect("shared sweep")
    })
}

#[test]
fn c01_free_operator_spectrum_has_no_gaps() {
    let spec = divergence(frame_medium(2, 32, 0.125), 0.0);
    let grid = BrillouinGrid::new(2, 9).unwrap();
    let bands = band_structure(&spec, &grid, 8, &opts()).unwrap();
    let report = detect_gaps(&bands, 30.0);
    let widest = report
        .gaps
        .iter()
        .map(|(a, b)| b - a)
        .fold(0.0_f64, f64::max);
    let tol = 1e-3 * report.ceiling;
    verdict(
        1,
        "free operator spectrum has no gaps",
        !report.clipped && widest <= tol,
        &format!("widest spurious gap {widest:.3e} below ceiling {}, tolerance {tol:.1e}", report.ceiling),
    );
}

#[test]
fn c02_sparse_solver_matches_dense_oracle_for_every_family() {
    // n = 8 keeps the fibers small enough for the dense reference; the frame
    // walls of half-width 0.25 admit the magnetic gauge at this resolution
    let medium = frame_medium(2, 8, 0.25);
    let gauge = Gauge::build(&medium, 0.8).unwrap();
    let families: Vec<(&str, Family, [f64; 3])> = vec![
        ("schrodinger", Family::Schrodinger { potential_width: 0.05 }, [0.5, 7.0, 120.0]),
        (
            "divergence",
            Family::Divergence { a_diag: vec![2.0, 1.0], b_diag: vec![1.0, 3.0] },
            [0.5, 7.0, 120.0],
        ),
        ("divergence_decreasing", Family::DivergenceDecreasing, [0.5, 7.0, 120.0]),
        ("beltrami", Family::Beltrami, [1.0, 4.0, 16.0]),
        ("magnetic", Family::Magnetic { gauge: gauge.clone() }, [0.5, 7.0, 120.0]),
        ("pauli_plus", Family::PauliPlus { gauge: gauge.clone() }, [0.5, 7.0, 120.0]),
        ("pauli_minus", Family::PauliMinus { gauge }, [0.5, 7.0, 120.0]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20260826);
    let thetas: Vec<[f64; 2]> = (0..5)
        .map(|_| {
            [
                rng.gen::<f64>() * 2.0 * std::f64::consts::PI - std::f64::consts::PI,
                rng.gen::<f64>() * 2.0 * std::f64::consts::PI - std::f64::consts::PI,
            ]
        })
        .collect();
    let mut worst = 0.0_f64;
    let mut worst_at = String::new();
    for (name, family, lambdas) in families {
        for &lambda in &lambdas {
            let spec = OperatorSpec::new(family.clone(), medium.clone(), lambda).unwrap();
            for theta in &thetas {
                let fiber = assemble_fiber(&spec, theta).unwrap();
                let sparse = smallest_eigenpairs(&fiber.stiffness, &fiber.mass, 6, &opts())
                    .unwrap()
                    .eigenvalues;
                let dense = dense_oracle(&fiber.stiffness, &fiber.mass, None).unwrap();
                for (k, (s, d)) in sparse.iter().zip(&dense).enumerate() {
                    let rel = (s - d).abs() / (1.0 + d.abs());
                    if rel > worst {
                        worst = rel;
                        worst_at = format!("{name} lambda={lambda} k={k}");
                    }
                }
            }
        }
    }
    verdict(
        2,
        "sparse solver matches dense oracle for every family",
        worst <= 1e-8,
        &format!("worst relative deviation {worst:.2e} at {worst_at}, tolerance 1e-8"),
    );
}

#[test]
fn c03_dirichlet_reference_converges_at_second_order() {
    // ground Dirichlet eigenvalue of the centered box of half-width 1/4:
    // closed form 2 pi^2 / (1/2)^2 = 8 pi^2
    let exact = 8.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mut errs = Vec::new();
    for n in [16usize, 32, 64] {
        let medium = PeriodicMedium::build(
            PeriodCell::new(2, n).unwrap(),
            ShapeSpec::CenteredBox { half_width: 0.25 },
        )
        .unwrap();
        let ev = reference_spectrum(&medium, BoundaryCondition::Dirichlet, 1.0, 1, &opts())
            .unwrap();
        errs.push((ev[0] - exact).abs());
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let final_rel = errs[2] / exact;
    let ok = orders.iter().all(|&p| (1.5..=2.5).contains(&p)) && final_rel < 0.01;
    verdict(
        3,
        "dirichlet reference converges at second order",
        ok,
        &format!("observed orders {orders:?} (expected ~2), final relative error {final_rel:.2e}"),
    );
}

#[test]
fn c04_first_band_upper_endpoint_approaches_ground_dirichlet_energy() {
    let report = shared_sweep();
    let delta1 = report.reference[0];
    // the contract covers the first three ladder contrasts
    let uppers: Vec<f64> = report.band_structures[..3]
        .iter()
        .map(|b| b.band_interval(0).1)
        .collect();
    let dists: Vec<f64> = uppers.iter().map(|u| (u - delta1).abs()).collect();
    let nondecreasing = uppers.windows(2).all(|w| w[1] >= w[0] - 1e-8 * w[0].abs());
    let shrinking = dists.windows(2).all(|w| w[1] < w[0]);
    let close = dists[2] < 0.05 * delta1;
    verdict(
        4,
        "first band upper endpoint approaches ground dirichlet energy",
        nondecreasing && shrinking && close,
        &format!(
            "uppers {uppers:?} vs delta_1 {delta1:.4}; distances {dists:?}, final < {:.3}",
            0.05 * delta1
        ),
    );
}

#[test]
fn c05_gap_opens_after_first_band_and_persists() {
    let report = shared_sweep();
    let delta1 = report.reference[0];
    let find = |i: usize| -> Option<(f64, f64)> {
        report.gap_reports[i]
            .gaps
            .iter()
            .copied()
            .find(|&(a, _)| (a - delta1).abs() <= 0.05 * delta1)
    };
    let g4 = find(2); // lambda = 1e4
    let g5 = find(3); // lambda = 1e5
    let overlap = match (g4, g5) {
        (Some(a), Some(b)) => a.1 > b.0 && b.1 > a.0,
        _ => false,
    };
    let openings = gap_opening(report, 0.05);
    let tracked = openings
        .iter()
        .find(|o| (o.reference - delta1).abs() < 1e-9)
        .map(|o| o.lambda_star.is_some_and(|l| l <= 1e4) && o.persistent_overlap)
        .unwrap_or(false);
    verdict(
        5,
        "gap opens after first band and persists",
        overlap && tracked,
        &format!("gap above delta_1 {delta1:.4}: at 1e4 {g4:?}, at 1e5 {g5:?}, overlapping and tracked to the ladder end"),
    );
}

#[test]
fn c06_ids_counts_reference_eigenvalues_at_high_contrast() {
    let report = shared_sweep();
    let bands = report.band_structures.last().unwrap(); // lambda = 1e6
    let refs = &report.reference;
    // midpoints between consecutive distinct reference values; a degenerate
    // cluster shares the midpoint to the next distinct value
    let mut distinct: Vec<f64> = Vec::new();
    for &r in refs {
        if distinct.last().is_none_or(|&p| (r - p).abs() > 1e-6 * r.abs().max(1.0)) {
            distinct.push(r);
        }
    }
    let mut ok = true;
    let mut detail = String::new();
    for k in 0..3 {
        let target = refs[k];
        let next = distinct
            .iter()
            .copied()
            .find(|&d| d > target + 1e-6 * target.abs().max(1.0))
            .expect("reference spectrum covers the ceiling");
        let e = 0.5 * (target + next);
        let v = ids(bands, e);
        let expected = refs.iter().filter(|&&r| r <= e).count();
        // exceptional fibers (theta = 0 keeps states supported on the walls)
        // carry a single grid weight, so integer counts survive rounding
        let matches = v.trusted && (v.value - expected as f64).abs() < 0.5
            && v.value.round() as usize == expected;
        ok &= matches;
        detail.push_str(&format!("ids({e:.2}) = {:.4} ~ {expected}; ", v.value));
    }
    verdict(6, "ids counts reference eigenvalues at high contrast", ok, detail.trim_end());
}

#[test]
fn c07_schrodinger_and_divergence_bands_agree_at_high_contrast() {
    let report = shared_sweep();
    let div = &report.band_structures[2]; // lambda = 1e4
    let medium = frame_medium(2, 64, 0.125);
    let spec =
        OperatorSpec::new(Family::Schrodinger { potential_width: 0.0 }, medium, 1e4).unwrap();
    let sch = band_structure(&spec, &div.grid, SWEEP_K_MAX, &opts()).unwrap();
    // both spectra cluster at the Dirichlet energies of the inclusion for
    // every nonzero quasimomentum; the theta = 0 divergence fiber keeps the
    // periodic constant mode and is the only structural difference
    let mut worst = 0.0_f64;
    for (j, theta) in div.grid.points().iter().enumerate() {
        if theta.iter().all(|&t| t == 0.0) {
            continue;
        }
        for k in 0..5 {
            let d = div.energies[j][k];
            let s = sch.energies[j][k];
            worst = worst.max((s - d).abs() / d.abs().max(1.0));
        }
    }
    verdict(
        7,
        "schrodinger and divergence bands agree at high contrast",
        worst <= 0.05,
        &format!("worst relative deviation {worst:.4} over nonzero fibers, first 5 bands, tolerance 0.05"),
    );
}

#[test]
fn c08_band_energies_are_monotone_in_contrast() {
    let tol = 1e-8;
    // increasing families: the shared divergence sweep plus a schrodinger
    // ladder on a coarser grid
    let report = shared_sweep();
    let mut max_drop = 0.0_f64;
    for w in report.band_structures.windows(2) {
        for (r0, r1) in w[0].energies.iter().zip(&w[1].energies) {
            for (e0, e1) in r0.iter().zip(r1) {
                max_drop = max_drop.max((e0 - e1) / e0.abs().max(1.0));
            }
        }
    }
    let medium = frame_medium(2, 16, 0.125);
    let grid = BrillouinGrid::new(2, 5).unwrap();
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut sch_drop = 0.0_f64;
    for lambda in [1.0, 10.0, 100.0] {
        let spec = OperatorSpec::new(
            Family::Schrodinger { potential_width: 0.05 },
            medium.clone(),
            lambda,
        )
        .unwrap();
        let b = band_structure(&spec, &grid, 5, &opts()).unwrap();
        if let Some(p) = prev {
            for (r0, r1) in p.iter().zip(&b.energies) {
                for (e0, e1) in r0.iter().zip(r1) {
                    sch_drop = sch_drop.max((e0 - e1) / e0.abs().max(1.0));
                }
            }
        }
        prev = Some(b.energies);
    }
    // decreasing family
    let probe =
        decreasing_family_probe(&medium, &[1.0, 10.0, 100.0], &grid, 5, &opts()).unwrap();
    let ok = max_drop <= tol && sch_drop <= tol && probe.monotone;
    verdict(
        8,
        "band energies are monotone in contrast",
        ok,
        &format!(
            "divergence max drop {max_drop:.2e}, schrodinger max drop {sch_drop:.2e}, decreasing family max rise {:.2e}",
            probe.max_violation
        ),
    );
}

#[test]
fn c09_neumann_dirichlet_brackets_enclose_band_energies() {
    let grid = BrillouinGrid::new(2, 5).unwrap();
    let medium = frame_medium(2, 16, 0.125);
    let cases: Vec<(&str, OperatorSpec)> = vec![
        ("divergence lambda=10", divergence(medium.clone(), 10.0)),
        ("divergence lambda=1e3", divergence(medium.clone(), 1e3)),
        (
            "beltrami lambda=2",
            OperatorSpec::new(Family::Beltrami, medium.clone(), 2.0).unwrap(),
        ),
        (
            "beltrami lambda=8",
            OperatorSpec::new(Family::Beltrami, medium.clone(), 8.0).unwrap(),
        ),
    ];
    let mut worst = 0.0_f64;
    let mut worst_at = String::new();
    for (name, spec) in cases {
        let br = bracketing(&spec, 6, &opts()).unwrap();
        let bands = band_structure(&spec, &grid, 6, &opts()).unwrap();
        for row in &bands.energies {
            for (k, &e) in row.iter().enumerate() {
                let scale = 1.0 + e.abs();
                let v = (br.neumann[k] - e).max(e - br.dirichlet[k]) / scale;
                if v > worst {
                    worst = v;
                    worst_at = name.to_string();
                }
            }
        }
    }
    verdict(
        9,
        "neumann dirichlet brackets enclose band energies",
        worst <= 1e-8,
        &format!("worst enclosure violation {worst:.2e} ({worst_at}), tolerance 1e-8"),
    );
}

#[test]
fn c10_conformal_family_approaches_neumann_ball_spectrum() {
    let medium = PeriodicMedium::build(
        PeriodCell::new(3, 16).unwrap(),
        ShapeSpec::CenteredDisk { radius: 0.3 },
    )
    .unwrap();
    let grid = BrillouinGrid::new(3, 3).unwrap();
    let report =
        beltrami_neumann_limit(&medium, &[4.0, 8.0, 16.0], &grid, 6, 40.0, &opts()).unwrap();
    let d = &report.concentration;
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    // first positive Neumann eigenvalue of the ball on the same grid
    let first_pos = report
        .reference
        .iter()
        .copied()
        .find(|&r| r > 1e-6 * report.ceiling)
        .unwrap();
    let split = 0.5 * first_pos;
    // a gap must separate the near-zero cluster from the first positive one
    let gap = report
        .gap_reports
        .last()
        .unwrap()
        .gaps
        .iter()
        .copied()
        .find(|&(a, b)| a < split && b > split);
    verdict(
        10,
        "conformal family approaches neumann ball spectrum",
        !report.exploratory && decreasing && gap.is_some(),
        &format!(
            "band distance to reference along ladder {d:?}; straddling gap at top contrast {gap:?} (first positive reference {first_pos:.3})"
        ),
    );
}

#[test]
fn c11_pauli_pair_spectra_converge_under_refinement() {
    let grid = BrillouinGrid::new(2, 5).unwrap();
    let coarse = supersymmetry_check(&frame_medium(2, 16, 0.125), 1.0, 1.0, &grid, 6, &opts())
        .unwrap();
    let fine = supersymmetry_check(&frame_medium(2, 32, 0.125), 1.0, 1.0, &grid, 6, &opts())
        .unwrap();
    let zero = supersymmetry_check(&frame_medium(2, 16, 0.125), 0.0, 1.0, &grid, 6, &opts())
        .unwrap();
    let factor = coarse.distance / fine.distance;
    let ok = coarse.distance > 0.0 && factor >= 1.5 && zero.distance == 0.0;
    verdict(
        11,
        "pauli pair spectra converge under refinement",
        ok,
        &format!(
            "paired-spectrum distance {:.3e} (n=16) -> {:.3e} (n=32), factor {factor:.2} >= 1.5; zero field distance {:.1e}",
            coarse.distance, fine.distance, zero.distance
        ),
    );
}

#[test]
fn c12_nonzero_integral_criterion_separates_ground_and_odd_states() {
    let box_medium = PeriodicMedium::build(
        PeriodCell::new(2, 32).unwrap(),
        ShapeSpec::CenteredBox { half_width: 0.25 },
    )
    .unwrap();
    let disk_medium = PeriodicMedium::build(
        PeriodCell::new(2, 32).unwrap(),
        ShapeSpec::CenteredDisk { radius: 0.3 },
    )
    .unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for (name, medium) in [("box", &box_medium), ("disk", &disk_medium)] {
        let r = higher_gap_criterion(medium, 1, &opts()).unwrap();
        match r.verdict {
            CriterionVerdict::Holds { witness } if witness > 1e-2 => {
                detail.push_str(&format!("{name} k=1 holds (witness {witness:.3}); "));
            }
            other => {
                ok = false;
                detail.push_str(&format!("{name} k=1 unexpectedly {other:?}; "));
            }
        }
    }
    // the degenerate first excited pair of the centered square is odd in one
    // variable, hence orthogonal to constants
    for k in [2usize, 3] {
        let r = higher_gap_criterion(&box_medium, k, &opts()).unwrap();
        match r.verdict {
            CriterionVerdict::Fails { witness } if witness < 1e-6 => {
                detail.push_str(&format!("box k={k} fails (witness {witness:.1e}); "));
            }
            other => {
                ok = false;
                detail.push_str(&format!("box k={k} unexpectedly {other:?}; "));
            }
        }
    }
    verdict(
        12,
        "nonzero integral criterion separates ground and odd states",
        ok,
        detail.trim_end(),
    );
}

#[test]
fn c13_identical_runs_produce_byte_identical_artifacts() {
    let config_text = "\
[geometry]
dim = 2
resolution = 64
shape = frame
half_width = 0.125

[operator]
family = divergence
ladder = 1e2 1e3 1e4

[bloch]
n_theta = 5
k_max = 7
ceiling = 160

[task]
name = sweep
";
    let config = RunConfig::parse(config_text).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        blochband::runner::run(&config, d.path(), false).unwrap();
    }
    let mut ok = true;
    let mut detail = String::new();
    for name in ["bands.csv", "sweep.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        let same = a == b;
        ok &= same;
        detail.push_str(&format!(
            "{name}: {} bytes, {}; ",
            a.len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    verdict(13, "identical runs produce byte identical artifacts", ok, detail.trim_end());
}
