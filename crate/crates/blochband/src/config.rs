//! Run configuration: a flat key-value text format with `[section]` headers,
//! parsed into a typed config. Diff-friendly and trivially parseable; `#`
//! starts a comment.
//!
//! Sections and keys:
//!
//! ```text
//! [geometry]
//! dim = 2
//! resolution = 32
//! shape = frame            # frame | disk | box | thin_walls
//! half_width = 0.125       # radius = ... for disk
//!
//! [operator]
//! family = divergence      # schrodinger | divergence | divergence_decreasing
//!                          # | beltrami | magnetic | pauli_plus | pauli_minus
//! lambda = 1e4             # or: ladder = 1e2 1e3 1e4
//! a_diag = 1 1             # divergence only (defaults to identity)
//! b_diag = 1 1
//! potential_width = 0.02   # schrodinger only
//! beta = 1.0               # magnetic/Pauli flux strength
//!
//! [bloch]
//! n_theta = 9
//! k_max = 8
//! ceiling = 30
//! tol = 1e-10
//!
//! [task]
//! name = bands             # bands | gaps | ids | sweep | bracketing | susy
//!                          # | criterion
//! k = 2                    # criterion only: reference eigenvalue index
//! refined_resolution = 32  # susy only: comparison grid (default 2n)
//!
//! [output]
//! directory = out
//! ```

use crate::assembly::{Family, Gauge, OperatorSpec};
use crate::error::{Error, Result};
use crate::geometry::{PeriodCell, PeriodicMedium, ShapeSpec};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Bands,
    Gaps,
    Ids,
    Sweep,
    Bracketing,
    Susy,
    Criterion,
}

impl Task {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "bands" => Task::Bands,
            "gaps" => Task::Gaps,
            "ids" => Task::Ids,
            "sweep" => Task::Sweep,
            "bracketing" => Task::Bracketing,
            "susy" => Task::Susy,
            "criterion" => Task::Criterion,
            _ => {
                return Err(Error::Config(format!(
                    "unknown task '{s}' (expected bands|gaps|ids|sweep|bracketing|susy|criterion)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryConfig {
    pub dim: usize,
    pub resolution: usize,
    pub shape: String,
    pub parameter: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorConfig {
    pub family: String,
    /// Contrast ladder; a single `lambda` key yields a one-element ladder.
    pub ladder: Vec<f64>,
    pub a_diag: Option<Vec<f64>>,
    pub b_diag: Option<Vec<f64>>,
    pub potential_width: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlochConfig {
    pub n_theta: usize,
    pub k_max: usize,
    pub ceiling: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskConfig {
    pub name: Task,
    /// Reference eigenvalue index for the criterion task (one-based).
    pub k: usize,
    /// Comparison resolution for the susy refinement study.
    pub refined_resolution: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub operator: OperatorConfig,
    pub bloch: BlochConfig,
    pub task: TaskConfig,
    pub output_directory: String,
}

struct RawSections {
    // section -> key -> (line, value)
    map: BTreeMap<String, BTreeMap<String, (usize, String)>>,
}

impl RawSections {
    fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, BTreeMap<String, (usize, String)>> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {lineno}: unterminated section header")))?;
                section = name.trim().to_string();
                map.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected 'key = value'")))?;
            if section.is_empty() {
                return Err(Error::Config(format!(
                    "line {lineno}: key outside any [section]"
                )));
            }
            let prev = map
                .get_mut(&section)
                .unwrap()
                .insert(key.trim().to_string(), (lineno, value.trim().to_string()));
            if prev.is_some() {
                return Err(Error::Config(format!(
                    "line {lineno}: duplicate key '{}' in [{section}]",
                    key.trim()
                )));
            }
        }
        Ok(RawSections { map })
    }

    fn section(&self, name: &str) -> Result<&BTreeMap<String, (usize, String)>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing section [{name}]")))
    }
}

fn get<'a>(
    sec: &'a BTreeMap<String, (usize, String)>,
    section: &str,
    key: &str,
) -> Result<&'a str> {
    sec.get(key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Config(format!("missing key '{key}' in [{section}]")))
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("[{section}] {key} = '{v}': not a valid number")))
}

fn parse_list(section: &str, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(section, key, s))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawSections::parse(text)?;
        for name in raw.map.keys() {
            if !matches!(name.as_str(), "geometry" | "operator" | "bloch" | "task" | "output") {
                return Err(Error::Config(format!("unknown section [{name}]")));
            }
        }

        let g = raw.section("geometry")?;
        let shape = get(g, "geometry", "shape")?.to_string();
        let param_key = match shape.as_str() {
            "disk" => "radius",
            "frame" | "box" | "thin_walls" => "half_width",
            other => {
                return Err(Error::Config(format!(
                    "[geometry] shape = '{other}': expected frame|disk|box|thin_walls"
                )))
            }
        };
        let geometry = GeometryConfig {
            dim: parse_num("geometry", "dim", get(g, "geometry", "dim")?)?,
            resolution: parse_num("geometry", "resolution", get(g, "geometry", "resolution")?)?,
            parameter: parse_num("geometry", param_key, get(g, "geometry", param_key)?)?,
            shape,
        };

        let o = raw.section("operator")?;
        let ladder = match (o.get("lambda"), o.get("ladder")) {
            (Some((_, v)), None) => vec![parse_num("operator", "lambda", v)?],
            (None, Some((_, v))) => parse_list("operator", "ladder", v)?,
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "[operator] give either 'lambda' or 'ladder', not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config("[operator] needs 'lambda' or 'ladder'".into()))
            }
        };
        let operator = OperatorConfig {
            family: get(o, "operator", "family")?.to_string(),
            ladder,
            a_diag: o.get("a_diag").map(|(_, v)| parse_list("operator", "a_diag", v)).transpose()?,
            b_diag: o.get("b_diag").map(|(_, v)| parse_list("operator", "b_diag", v)).transpose()?,
            potential_width: o
                .get("potential_width")
                .map(|(_, v)| parse_num("operator", "potential_width", v))
                .transpose()?
                .unwrap_or(0.0),
            beta: o
                .get("beta")
                .map(|(_, v)| parse_num("operator", "beta", v))
                .transpose()?
                .unwrap_or(0.0),
        };

        let b = raw.section("bloch")?;
        let bloch = BlochConfig {
            n_theta: parse_num("bloch", "n_theta", get(b, "bloch", "n_theta")?)?,
            k_max: parse_num("bloch", "k_max", get(b, "bloch", "k_max")?)?,
            ceiling: parse_num("bloch", "ceiling", get(b, "bloch", "ceiling")?)?,
            tol: b
                .get("tol")
                .map(|(_, v)| parse_num("bloch", "tol", v))
                .transpose()?
                .unwrap_or(1e-10),
        };

        let t = raw.section("task")?;
        let task = TaskConfig {
            name: Task::parse(get(t, "task", "name")?)?,
            k: t.get("k").map(|(_, v)| parse_num("task", "k", v)).transpose()?.unwrap_or(1),
            refined_resolution: t
                .get("refined_resolution")
                .map(|(_, v)| parse_num("task", "refined_resolution", v))
                .transpose()?,
        };

        let output_directory = raw
            .map
            .get("output")
            .and_then(|s| s.get("directory"))
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| "out".into());

        let config = RunConfig { geometry, operator, bloch, task, output_directory };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.operator.ladder.is_empty() {
            return Err(Error::Config("contrast ladder is empty".into()));
        }
        if self.operator.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("contrast ladder must be strictly increasing".into()));
        }
        if self.bloch.k_max == 0 {
            return Err(Error::Config("[bloch] k_max must be >= 1".into()));
        }
        if !(self.bloch.ceiling > 0.0) {
            return Err(Error::Config("[bloch] ceiling must be > 0".into()));
        }
        if !(self.bloch.tol > 0.0) {
            return Err(Error::Config("[bloch] tol must be > 0".into()));
        }
        // surface cheap shape/family checks at parse time; the full builders
        // below repeat them with grid-dependent constraints
        self.shape()?.validate()?;
        if !matches!(
            self.operator.family.as_str(),
            "schrodinger"
                | "divergence"
                | "divergence_decreasing"
                | "beltrami"
                | "magnetic"
                | "pauli_plus"
                | "pauli_minus"
        ) {
            return Err(Error::Config(format!(
                "[operator] family = '{}': unknown family",
                self.operator.family
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<ShapeSpec> {
        let p = self.geometry.parameter;
        Ok(match self.geometry.shape.as_str() {
            "frame" => ShapeSpec::Frame { half_width: p },
            "disk" => ShapeSpec::CenteredDisk { radius: p },
            "box" => ShapeSpec::CenteredBox { half_width: p },
            "thin_walls" => ShapeSpec::ThinWalls { half_width: p },
            other => {
                return Err(Error::Config(format!(
                    "[geometry] shape = '{other}': expected frame|disk|box|thin_walls"
                )))
            }
        })
    }

    pub fn medium(&self) -> Result<PeriodicMedium> {
        let cell = PeriodCell::new(self.geometry.dim, self.geometry.resolution)?;
        PeriodicMedium::build(cell, self.shape()?)
    }

    pub fn family(&self, medium: &PeriodicMedium) -> Result<Family> {
        let m = self.geometry.dim;
        Ok(match self.operator.family.as_str() {
            "schrodinger" => Family::Schrodinger { potential_width: self.operator.potential_width },
            "divergence" => Family::Divergence {
                a_diag: self.operator.a_diag.clone().unwrap_or_else(|| vec![1.0; m]),
                b_diag: self.operator.b_diag.clone().unwrap_or_else(|| vec![1.0; m]),
            },
            "divergence_decreasing" => Family::DivergenceDecreasing,
            "beltrami" => Family::Beltrami,
            "magnetic" => Family::Magnetic { gauge: Gauge::build(medium, self.operator.beta)? },
            "pauli_plus" => Family::PauliPlus { gauge: Gauge::build(medium, self.operator.beta)? },
            "pauli_minus" => Family::PauliMinus { gauge: Gauge::build(medium, self.operator.beta)? },
            other => {
                return Err(Error::Config(format!(
                    "[operator] family = '{other}': unknown family"
                )))
            }
        })
    }

    /// Operator at the first ladder contrast.
    pub fn operator_spec(&self) -> Result<OperatorSpec> {
        let medium = self.medium()?;
        let family = self.family(&medium)?;
        OperatorSpec::new(family, medium, self.operator.ladder[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[geometry]
dim = 2
resolution = 16
shape = frame
half_width = 0.125

[operator]
family = divergence
lambda = 0

[bloch]
n_theta = 5
k_max = 4
ceiling = 30

[task]
name = bands
";

    #[test]
    fn parses_minimal() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.geometry.dim, 2);
        assert_eq!(c.operator.ladder, vec![0.0]);
        assert_eq!(c.task.name, Task::Bands);
        assert_eq!(c.output_directory, "out");
        c.operator_spec().unwrap();
    }

    #[test]
    fn parses_ladder_and_comments() {
        let text = MINIMAL.replace("lambda = 0", "ladder = 1e2, 1e3 1e4  # geometric");
        let c = RunConfig::parse(&text).unwrap();
        assert_eq!(c.operator.ladder, vec![1e2, 1e3, 1e4]);
    }

    #[test]
    fn rejects_bad_geometry_parameter() {
        let text = MINIMAL
            .replace("shape = frame", "shape = disk")
            .replace("half_width = 0.125", "radius = 0.6");
        let c = RunConfig::parse(&text);
        // parse-time shape check names the constraint
        let err = c.err().expect("radius 0.6 must be rejected").to_string();
        assert!(err.contains("0.5"), "diagnostic: {err}");
    }

    #[test]
    fn rejects_syntax_errors_with_line_numbers() {
        let err = RunConfig::parse("[geometry\ndim = 2").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let err = RunConfig::parse("[geometry]\nnonsense").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = RunConfig::parse(&format!("{MINIMAL}\n[geometry]\ndim = 3\n"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_lambda_and_ladder_together() {
        let text = MINIMAL.replace("lambda = 0", "lambda = 1\nladder = 1 2");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn rejects_unknown_family_and_task() {
        let text = MINIMAL.replace("family = divergence", "family = elasticity");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("elasticity"));
        let text = MINIMAL.replace("name = bands", "name = dance");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("dance"));
    }
}
