//! Task orchestration: executes a parsed run configuration and writes the
//! artifact set (bands.csv, gaps.json, ids.csv, sweep.json, summary.txt,
//! manifest.json), plus gnuplot-ready plot data derived from the artifacts.
//!
//! All numeric artifacts are byte-stable across identical runs: fixed solver
//! seeds, deterministic reductions, and 17-significant-digit float
//! formatting. Only manifest.json carries a wall clock.

use crate::assembly::{Family, OperatorSpec};
use crate::asymptotics::{
    beltrami_neumann_limit, decreasing_family_probe, gap_opening, higher_gap_criterion,
    lambda_sweep, supersymmetry_check, CriterionReport, DecreasingReport, GapOpening, SusyReport,
    SweepReport,
};
use crate::bloch::{
    band_structure, bracketing, detect_gaps, ids_curve, BandStructure, BracketPairs,
    BrillouinGrid, GapReport, IdsValue,
};
use crate::config::{RunConfig, Task};
use crate::eigensolve::SolveOptions;
use crate::error::{Error, Result};
use crate::geometry::PeriodicMedium;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Relative tolerance used when matching gap lower endpoints to reference
/// eigenvalues in sweep verdicts.
pub const GAP_MATCH_REL_TOL: f64 = 0.05;

/// Number of abscissae for the i.d.s. table.
const IDS_SAMPLES: usize = 401;

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Machine-readable payload of sweep.json, tagged by task.
#[derive(Serialize)]
#[serde(tag = "task", rename_all = "snake_case")]
enum Payload {
    Bands {
        intervals: Vec<Vec<(f64, f64)>>,
    },
    Gaps {
        reports: Vec<GapReport>,
    },
    Ids {
        tables: Vec<(f64, Vec<IdsValue>)>,
    },
    Sweep {
        report: SweepReport,
        openings: Vec<GapOpening>,
        monotone: bool,
        max_monotonicity_violation: f64,
    },
    DecreasingSweep {
        report: DecreasingReport,
    },
    Bracketing {
        brackets: Vec<BracketPairs>,
        max_enclosure_violation: f64,
    },
    Susy {
        coarse: SusyReport,
        refined: SusyReport,
        refinement_factor: f64,
    },
    Criterion {
        report: CriterionReport,
    },
}

#[derive(Serialize)]
struct SweepArtifact<'a> {
    config: &'a RunConfig,
    /// i.d.s. counting convention used throughout: per unit cell.
    ids_normalization: &'static str,
    #[serde(flatten)]
    payload: Payload,
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn bands_csv(structures: &[BandStructure]) -> String {
    let dim = structures.first().map(|b| b.grid.dim).unwrap_or(0);
    let mut out = String::from("lambda,band_k,theta_index");
    for d in 1..=dim {
        let _ = write!(out, ",theta_{d}");
    }
    out.push_str(",E\n");
    for b in structures {
        for (j, theta) in b.grid.points().iter().enumerate() {
            for k in 0..b.num_bands {
                let _ = write!(out, "{},{},{j}", fmt_f(b.lambda), k + 1);
                for t in theta {
                    let _ = write!(out, ",{}", fmt_f(*t));
                }
                let _ = writeln!(out, ",{}", fmt_f(b.energies[j][k]));
            }
        }
    }
    out
}

fn ids_csv(tables: &[(f64, Vec<IdsValue>)]) -> String {
    let mut out = String::from("lambda,E,F,trusted\n");
    for (lambda, table) in tables {
        for v in table {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f(*lambda),
                fmt_f(v.energy),
                fmt_f(v.value),
                v.trusted as u8
            );
        }
    }
    out
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

struct Summary {
    lines: Vec<String>,
}

impl Summary {
    fn new() -> Self {
        Summary { lines: Vec::new() }
    }

    fn verdict(&mut self, block: &str, label: &str, pass: bool, detail: String) {
        self.lines.push(format!(
            "[{block}] {label}: {} — {detail}",
            if pass { "PASS" } else { "FAIL" }
        ));
    }

    fn note(&mut self, block: &str, label: &str, detail: String) {
        self.lines.push(format!("[{block}] {label}: {detail}"));
    }

    fn render(&self, config: &RunConfig) -> String {
        let mut out = String::from("run summary\n===========\n");
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str("\nconfiguration\n-------------\n");
        out.push_str(&json(config).unwrap_or_default());
        out.push('\n');
        out
    }
}

fn solve_options(config: &RunConfig) -> SolveOptions {
    SolveOptions { tol: config.bloch.tol, ..SolveOptions::default() }
}

fn ladder_structures(
    template: &OperatorSpec,
    ladder: &[f64],
    grid: &BrillouinGrid,
    k_max: usize,
    opts: &SolveOptions,
) -> Result<Vec<BandStructure>> {
    ladder
        .iter()
        .map(|&l| band_structure(&template.with_lambda(l)?, grid, k_max, opts))
        .collect()
}

/// Executes the configured task, writing artifacts into `out_dir`.
///
/// On a numerical failure, whatever artifacts were completed stay on disk
/// and summary.txt is written with a failure marker before the error is
/// returned.
pub fn run(config: &RunConfig, out_dir: &Path, verbose: bool) -> Result<()> {
    let started = std::time::Instant::now();
    let mut artifacts = Artifacts::new(out_dir)?;
    let mut summary = Summary::new();
    let result = execute(config, &mut artifacts, &mut summary, verbose);
    if let Err(e) = &result {
        summary.note("run", "failure", format!("{e}"));
        summary.lines.push("RESULT: FAILED".into());
    }
    artifacts.write("summary.txt", &summary.render(config))?;
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "artifacts": artifacts.written,
        "status": if result.is_ok() { "ok" } else { "failed" },
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    fs::write(out_dir.join("manifest.json"), json(&manifest)?)?;
    result
}

fn execute(
    config: &RunConfig,
    artifacts: &mut Artifacts,
    summary: &mut Summary,
    verbose: bool,
) -> Result<()> {
    let template = config.operator_spec()?;
    let grid = BrillouinGrid::new(config.geometry.dim, config.bloch.n_theta)?;
    let opts = solve_options(config);
    let k_max = config.bloch.k_max;
    let ceiling = config.bloch.ceiling;
    let ladder = &config.operator.ladder;
    if verbose {
        eprintln!(
            "task {:?}: {} fibers per contrast, {} contrasts, k_max {k_max}",
            config.task.name,
            grid.len(),
            ladder.len()
        );
    }
    match config.task.name {
        Task::Bands => {
            let structures = ladder_structures(&template, ladder, &grid, k_max, &opts)?;
            artifacts.write("bands.csv", &bands_csv(&structures))?;
            let intervals: Vec<Vec<(f64, f64)>> =
                structures.iter().map(|b| b.intervals()).collect();
            for b in &structures {
                summary.note(
                    "bloch",
                    "band intervals",
                    format!("lambda {:.3e}: {:?}", b.lambda, b.intervals()),
                );
            }
            artifacts.write(
                "sweep.json",
                &json(&SweepArtifact {
                    config,
                    ids_normalization: "per unit cell",
                    payload: Payload::Bands { intervals },
                })?,
            )?;
        }
        Task::Gaps => {
            let structures = ladder_structures(&template, ladder, &grid, k_max, &opts)?;
            artifacts.write("bands.csv", &bands_csv(&structures))?;
            let reports: Vec<GapReport> =
                structures.iter().map(|b| detect_gaps(b, ceiling)).collect();
            for r in &reports {
                summary.note(
                    "bloch",
                    "gaps",
                    format!(
                        "lambda {:.3e}: {} gap(s) below ceiling {:.6}{}",
                        r.lambda,
                        r.gaps.len(),
                        r.ceiling,
                        if r.clipped { " (ceiling clipped to trusted window)" } else { "" }
                    ),
                );
            }
            artifacts.write("gaps.json", &json(&reports)?)?;
            artifacts.write(
                "sweep.json",
                &json(&SweepArtifact {
                    config,
                    ids_normalization: "per unit cell",
                    payload: Payload::Gaps { reports },
                })?,
            )?;
        }
        Task::Ids => {
            let structures = ladder_structures(&template, ladder, &grid, k_max, &opts)?;
            artifacts.write("bands.csv", &bands_csv(&structures))?;
            let abscissae: Vec<f64> = (0..IDS_SAMPLES)
                .map(|i| ceiling * i as f64 / (IDS_SAMPLES - 1) as f64)
                .collect();
            let tables: Vec<(f64, Vec<IdsValue>)> = structures
                .iter()
                .map(|b| (b.lambda, ids_curve(b, &abscissae)))
                .collect();
            artifacts.write("ids.csv", &ids_csv(&tables))?;
            for (lambda, table) in &tables {
                let top = table.last().map(|v| v.value).unwrap_or(0.0);
                summary.note(
                    "bloch",
                    "integrated density of states",
                    format!("lambda {lambda:.3e}: F({ceiling}) = {top} (per unit cell)"),
                );
            }
            artifacts.write(
                "sweep.json",
                &json(&SweepArtifact {
                    config,
                    ids_normalization: "per unit cell",
                    payload: Payload::Ids { tables },
                })?,
            )?;
        }
        Task::Sweep => run_sweep(config, &template, &grid, artifacts, summary)?,
        Task::Bracketing => {
            let mut structures = Vec::new();
            let mut brackets = Vec::new();
            let mut worst = 0.0_f64;
            for &lambda in ladder {
                let spec = template.with_lambda(lambda)?;
                let bands = band_structure(&spec, &grid, k_max, &opts)?;
                let br = bracketing(&spec, k_max, &opts)?;
                for row in &bands.energies {
                    for k in 0..k_max {
                        worst = worst
                            .max(br.neumann[k] - row[k])
                            .max(row[k] - br.dirichlet[k]);
                    }
                }
                structures.push(bands);
                brackets.push(br);
            }
            artifacts.write("bands.csv", &bands_csv(&structures))?;
            let scale = ceiling.abs().max(1.0);
            summary.verdict(
                "bloch",
                "band enclosure law (two-sided eigenvalue bounds)",
                worst <= 1e-8 * scale,
                format!("max enclosure violation {worst:.3e} over {} contrast(s)", ladder.len()),
            );
            artifacts.write(
                "sweep.json",
                &json(&SweepArtifact {
                    config,
                    ids_normalization: "per unit cell",
                    payload: Payload::Bracketing { brackets, max_enclosure_violation: worst },
                })?,
            )?;
        }
        Task::Susy => {
            let medium = template.medium.clone();
            let lambda = *ladder.last().unwrap();
            let beta = config.operator.beta;
            let coarse = supersymmetry_check(&medium, beta, lambda, &grid, k_max, &opts)?;
            let refined_n = config
                .task
                .refined_resolution
                .unwrap_or(2 * config.geometry.resolution);
            let refined_medium =
                PeriodicMedium::build(crate::geometry::PeriodCell::new(2, refined_n)?, medium.shape)?;
            let refined = supersymmetry_check(&refined_medium, beta, lambda, &grid, k_max, &opts)?;
            let factor = if refined.distance > 0.0 {
                coarse.distance / refined.distance
            } else if coarse.distance == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            summary.verdict(
                "asymptotics",
                "supersymmetric pairing law (paired spectra away from kernels)",
                if beta == 0.0 { coarse.distance == 0.0 } else { factor >= 1.5 },
                format!(
                    "paired-spectra distance {:.3e} at n={}, {:.3e} at n={refined_n} (factor {factor:.2})",
                    coarse.distance, config.geometry.resolution, refined.distance
                ),
            );
            artifacts.write(
                "sweep.json",
                &json(&SweepArtifact {
                    config,
                    ids_normalization: "per unit cell",
                    payload: Payload::Susy { coarse, refined, refinement_factor: factor },
                })?,
            )?;
        }
        Task::Criterion => {
            let report = higher_gap_criterion(&template.medium, config.task.k, &opts)?;
            summary.note(
                "asymptotics",
                "nonzero-integral gap criterion",
                format!(
                    "k = {}: eigenvalue {:.6}, cluster {:?}, verdict {:?}",
                    report.k, report.eigenvalue, report.cluster, report.verdict
                ),
            );
            artifacts.write(
                "sweep.json",
                &json(&SweepArtifact {
                    config,
                    ids_normalization: "per unit cell",
                    payload: Payload::Criterion { report },
                })?,
            )?;
        }
    }
    Ok(())
}

fn run_sweep(
    config: &RunConfig,
    template: &OperatorSpec,
    grid: &BrillouinGrid,
    artifacts: &mut Artifacts,
    summary: &mut Summary,
) -> Result<()> {
    let opts = solve_options(config);
    let k_max = config.bloch.k_max;
    let ceiling = config.bloch.ceiling;
    let ladder = &config.operator.ladder;
    if matches!(template.family, Family::DivergenceDecreasing) {
        let report = decreasing_family_probe(&template.medium, ladder, grid, k_max, &opts)?;
        artifacts.write("bands.csv", &bands_csv(&report.band_structures))?;
        summary.verdict(
            "asymptotics",
            "monotone family law (decreasing branch)",
            report.monotone,
            format!("max increase across the ladder {:.3e}", report.max_violation),
        );
        summary.note(
            "asymptotics",
            "near-zero band clusters",
            format!("{:?} (threshold {:.3e})", report.near_zero_counts, report.near_zero_tol),
        );
        artifacts.write(
            "sweep.json",
            &json(&SweepArtifact {
                config,
                ids_normalization: "per unit cell",
                payload: Payload::DecreasingSweep { report },
            })?,
        )?;
        return Ok(());
    }
    let report = if matches!(template.family, Family::Beltrami) {
        beltrami_neumann_limit(&template.medium, ladder, grid, k_max, ceiling, &opts)?
    } else {
        lambda_sweep(template, ladder, grid, k_max, ceiling, &opts)?
    };
    artifacts.write("bands.csv", &bands_csv(&report.band_structures))?;
    artifacts.write("gaps.json", &json(&report.gap_reports)?)?;

    // monotonicity of eigenvalues in the contrast, exact up to solver
    // tolerance for the increasing families
    let mut max_violation = 0.0_f64;
    for w in report.band_structures.windows(2) {
        for (row0, row1) in w[0].energies.iter().zip(&w[1].energies) {
            for (e0, e1) in row0.iter().zip(row1) {
                max_violation = max_violation.max(e0 - e1);
            }
        }
    }
    let monotone = max_violation <= 1e-8 * ceiling.abs().max(1.0);
    if ladder.len() > 1 {
        summary.verdict(
            "asymptotics",
            "monotone family law (increasing branch)",
            monotone,
            format!("max decrease across the ladder {max_violation:.3e}"),
        );
        let d = &report.concentration;
        summary.verdict(
            "asymptotics",
            "spectral concentration law (bands approach the reference spectrum)",
            d.windows(2).all(|w| w[1] <= w[0]),
            format!("d(lambda) = {d:?} below window {:.6}", report.window),
        );
    }
    if report.exploratory {
        summary.note(
            "asymptotics",
            "exploratory",
            "two-dimensional conformal family: limit statement not covered, diagnostic only"
                .into(),
        );
    }
    let openings = gap_opening(&report, GAP_MATCH_REL_TOL);
    let opened: Vec<&GapOpening> = openings.iter().filter(|o| o.lambda_star.is_some()).collect();
    summary.verdict(
        "asymptotics",
        "gap-opening law (gap after a reference eigenvalue persists)",
        ladder.len() == 1 || !opened.is_empty() || report.lambdas.iter().all(|&l| l == 0.0),
        format!(
            "{} of {} reference value(s) below the ceiling acquired a persistent gap",
            opened.len(),
            openings.len()
        ),
    );
    for o in &opened {
        summary.note(
            "asymptotics",
            "gap",
            format!(
                "reference {:.6}: persists from lambda = {:.3e}, interval at top {:?}, consecutive overlap {}",
                o.reference,
                o.lambda_star.unwrap(),
                o.interval_at_max,
                o.persistent_overlap
            ),
        );
    }
    artifacts.write(
        "sweep.json",
        &json(&SweepArtifact {
            config,
            ids_normalization: "per unit cell",
            payload: Payload::Sweep {
                report,
                openings,
                monotone,
                max_monotonicity_violation: max_violation,
            },
        })?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// plot data

fn path_vertices(dim: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    match dim {
        1 => vec![vec![0.0], vec![PI]],
        2 => vec![vec![0.0, 0.0], vec![PI, 0.0], vec![PI, PI], vec![0.0, 0.0]],
        _ => vec![
            vec![0.0, 0.0, 0.0],
            vec![PI, 0.0, 0.0],
            vec![PI, PI, 0.0],
            vec![PI, PI, PI],
            vec![0.0, 0.0, 0.0],
        ],
    }
}

/// Position of `theta` along the polyline through `vertices`, if it lies on
/// it (within tolerance).
fn path_coordinate(theta: &[f64], vertices: &[Vec<f64>]) -> Option<f64> {
    let mut s0 = 0.0;
    for pair in vertices.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let seg_len: f64 =
            a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
        // parameter from the dominant direction
        let mut t = None;
        for d in 0..a.len() {
            if (b[d] - a[d]).abs() > 1e-12 {
                t = Some((theta[d] - a[d]) / (b[d] - a[d]));
                break;
            }
        }
        if let Some(t) = t {
            if (-1e-9..=1.0 + 1e-9).contains(&t) {
                let on: bool = a
                    .iter()
                    .zip(b)
                    .zip(theta)
                    .all(|((x, y), th)| (x + t * (y - x) - th).abs() < 1e-9);
                if on {
                    return Some(s0 + t * seg_len);
                }
            }
        }
        s0 += seg_len;
    }
    None
}

struct BandRow {
    lambda: f64,
    band_k: usize,
    theta: Vec<f64>,
    energy: f64,
}

fn read_bands_csv(path: &Path) -> Result<Vec<BandRow>> {
    let text = fs::read_to_string(path)
        .map_err(|_| Error::MissingArtifact(format!("{}", path.display())))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 5 {
            return Err(Error::Config(format!("malformed bands.csv row: {line}")));
        }
        let dim = cols.len() - 4;
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config(format!("malformed bands.csv value '{s}'")))
        };
        rows.push(BandRow {
            lambda: parse(cols[0])?,
            band_k: cols[1]
                .parse()
                .map_err(|_| Error::Config(format!("malformed band index '{}'", cols[1])))?,
            theta: cols[3..3 + dim].iter().map(|s| parse(s)).collect::<Result<_>>()?,
            energy: parse(cols[3 + dim])?,
        });
    }
    Ok(rows)
}

/// Derives gnuplot-ready whitespace-separated data files from the artifacts
/// in `dir`: a band diagram along the conventional quasimomentum path, a
/// contrast-vs-gap chart, and the i.d.s. staircase.
pub fn emit_plot_data(dir: &Path) -> Result<()> {
    let rows = read_bands_csv(&dir.join("bands.csv"))?;
    let lambda_top = rows.iter().map(|r| r.lambda).fold(f64::NEG_INFINITY, f64::max);
    let dim = rows.first().map(|r| r.theta.len()).unwrap_or(0);
    let vertices = path_vertices(dim);

    let mut out = String::from(
        "# band diagram along the high-symmetry path; blocks separated per band\n# s E\n",
    );
    let k_top = rows.iter().map(|r| r.band_k).max().unwrap_or(0);
    for k in 1..=k_top {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.lambda == lambda_top && r.band_k == k)
            .filter_map(|r| path_coordinate(&r.theta, &vertices).map(|s| (s, r.energy)))
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
        for (s, e) in pts {
            let _ = writeln!(out, "{} {}", fmt_f(s), fmt_f(e));
        }
        out.push('\n');
    }
    fs::write(dir.join("band_path.dat"), out)?;

    let gaps_path = dir.join("gaps.json");
    let mut out = String::from("# gap chart: lambda gap_lower gap_upper\n");
    if gaps_path.exists() {
        let reports: Vec<GapReport> = serde_json::from_str(
            &fs::read_to_string(&gaps_path)?,
        )
        .map_err(|e| Error::Config(format!("gaps.json: {e}")))?;
        for r in &reports {
            for &(a, b) in &r.gaps {
                let _ = writeln!(out, "{} {} {}", fmt_f(r.lambda), fmt_f(a), fmt_f(b));
            }
        }
    }
    fs::write(dir.join("gap_chart.dat"), out)?;

    let ids_path = dir.join("ids.csv");
    if ids_path.exists() {
        let text = fs::read_to_string(&ids_path)?;
        let mut out = String::from("# i.d.s. staircase at the largest contrast: E F\n");
        let mut top = f64::NEG_INFINITY;
        for line in text.lines().skip(1) {
            if let Some(l) = line.split(',').next().and_then(|s| s.parse::<f64>().ok()) {
                top = top.max(l);
            }
        }
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() >= 3 && cols[0].parse::<f64>().ok() == Some(top) {
                let _ = writeln!(out, "{} {}", cols[1], cols[2]);
            }
        }
        fs::write(dir.join("ids_staircase.dat"), out)?;
    }
    Ok(())
}
