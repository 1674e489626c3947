//! Run configuration: a JSON document naming one instance source, the
//! leakage levels to visit and the solvers to run.

use std::fmt;
use std::path::{Path, PathBuf};

use l1priv::oracle::SearchConfig;
use l1priv::watermark::{watermark_instance, WatermarkParams};
use l1priv::{Channel, Distribution, LogBase, ProblemInstance, SolverRegistry};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A number given as a JSON number, a decimal string or a `"p/q"` rational.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Num(pub f64);

impl Num {
    pub fn parse(text: &str) -> Result<f64, String> {
        let text = text.trim();
        let value = match text.split_once('/') {
            Some((p, q)) => {
                let p: f64 = p.trim().parse().map_err(|_| format!("bad numerator in '{text}'"))?;
                let q: f64 = q.trim().parse().map_err(|_| format!("bad denominator in '{text}'"))?;
                if q == 0.0 {
                    return Err(format!("zero denominator in '{text}'"));
                }
                p / q
            }
            None => text.parse().map_err(|_| format!("'{text}' is not a number"))?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(format!("'{text}' is not finite"))
        }
    }
}

struct NumVisitor;

impl de::Visitor<'_> for NumVisitor {
    type Value = Num;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number or a \"p/q\" string")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
        Ok(Num(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
        Ok(Num(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
        Ok(Num(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
        Num::parse(v).map(Num).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(NumVisitor)
    }
}

/// Parses JSON, naming the offending field and position on failure.
pub fn parse_json<T: de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })?;
    de.end().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(value)
}

fn values(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSweep {
    pub start: Num,
    pub stop: Num,
    pub count: usize,
    #[serde(default)]
    pub scale: SweepScale,
}

impl EpsilonSweep {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let (a, b, n) = (self.start.0, self.stop.0, self.count);
        if !(a > 0.0 && b > a) {
            return Err(CliError::Config(format!(
                "epsilon_sweep: need 0 < start < stop, got start {a}, stop {b}"
            )));
        }
        if n < 2 {
            return Err(CliError::Config(format!("epsilon_sweep.count: need at least 2, got {n}")));
        }
        let step = |k: usize| k as f64 / (n - 1) as f64;
        Ok((0..n)
            .map(|k| match self.scale {
                SweepScale::Linear => a + (b - a) * step(k),
                SweepScale::Log => (a.ln() + (b.ln() - a.ln()) * step(k)).exp(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alphas {
    One(Num),
    Many(Vec<Num>),
}

impl Alphas {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Alphas::One(a) => vec![a.0],
            Alphas::Many(v) => values(v),
        }
    }
}

/// Solver selection: a registered solver name or `all`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolverChoice(pub String);

impl Default for SolverChoice {
    fn default() -> Self {
        SolverChoice("approx".into())
    }
}

/// Solvers run by `all`, in column order.
pub const ALL_SOLVERS: [&str; 4] = ["approx", "invertible", "oracle", "perfect"];

impl SolverChoice {
    pub fn is_all(&self) -> bool {
        self.0 == "all"
    }

    pub fn names(&self, registry: &SolverRegistry) -> Result<Vec<String>, CliError> {
        if self.is_all() {
            return Ok(ALL_SOLVERS.iter().map(|s| s.to_string()).collect());
        }
        registry
            .get(&self.0)
            .map_err(|_| {
                CliError::Config(format!(
                    "solver: unknown '{}', expected one of {} or all",
                    self.0,
                    registry.names().collect::<Vec<_>>().join(", ")
                ))
            })
            .map(|s| vec![s.name().to_string()])
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Inline leakage matrix, one row per `X` symbol.
    pub p_x_given_y: Option<Vec<Vec<Num>>>,
    pub p_y: Option<Vec<Num>>,
    /// Watermark family parameter, one value or a list.
    pub alpha: Option<Alphas>,
    /// JSON file holding `p_x_given_y`, `p_y` and optional labels.
    pub instance_file: Option<PathBuf>,
    pub epsilon: Option<Num>,
    pub epsilon_sweep: Option<EpsilonSweep>,
    #[serde(default)]
    pub log_base: LogBase,
    pub x_values: Option<Vec<Num>>,
    pub y_values: Option<Vec<Num>>,
    #[serde(default)]
    pub solver: SolverChoice,
    /// Directory receiving `result.json` and `table.csv`.
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub force_hxy: bool,
    pub combination_cap: Option<u64>,
    #[serde(default)]
    pub ordered: bool,
    pub threads: Option<usize>,
    pub oracle: Option<SearchConfig>,
}

/// Optional `X` and `Y` labels.
type Labels = (Option<Vec<f64>>, Option<Vec<f64>>);

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    p_x_given_y: Vec<Vec<Num>>,
    p_y: Vec<Num>,
    x_values: Option<Vec<Num>>,
    y_values: Option<Vec<Num>>,
}

fn read_instance_file(path: &Path) -> Result<InstanceFile, CliError> {
    let fail = |e: &dyn fmt::Display| CliError::Config(format!("instance_file {}: {e}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| fail(&e))?;
    parse_json(&text).map_err(|e| fail(&e))
}

/// Where the instances of a run come from.
#[derive(Debug, Clone)]
pub enum Source {
    Inline {
        rows: Vec<Vec<f64>>,
        p_y: Vec<f64>,
    },
    Watermark(Vec<f64>),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Inline { rows, p_y } => write!(f, "inline {}x{} instance", rows.len(), p_y.len()),
            Source::Watermark(a) => write!(f, "watermark alpha {a:?}"),
        }
    }
}

/// One instance of a run; `alpha` is set for watermark instances.
#[derive(Debug, Clone)]
pub struct LabeledInstance {
    pub alpha: Option<f64>,
    pub instance: ProblemInstance,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        parse_json(text)
    }

    /// Reads a config file; relative `instance_file` paths resolve against
    /// the config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(file), Some(dir)) = (&cfg.instance_file, path.parent()) {
            if file.is_relative() {
                cfg.instance_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn source(&self) -> Result<Source, CliError> {
        let inline = self.p_x_given_y.is_some() || self.p_y.is_some();
        let given: Vec<&str> = [
            (inline, "p_x_given_y/p_y"),
            (self.alpha.is_some(), "alpha"),
            (self.instance_file.is_some(), "instance_file"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        match given.len() {
            0 => return Err(CliError::Config("no instance source: give p_x_given_y and p_y, alpha, or instance_file".into())),
            1 => {}
            _ => return Err(CliError::Config(format!("conflicting instance sources: {}", given.join(", ")))),
        }
        if let Some(a) = &self.alpha {
            let alphas = a.values();
            if alphas.is_empty() {
                return Err(CliError::Config("alpha: empty list".into()));
            }
            if let Some(bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(CliError::Config(format!("alpha: {bad} is outside [0, 1]")));
            }
            return Ok(Source::Watermark(alphas));
        }
        let (rows, p_y) = match &self.instance_file {
            Some(path) => {
                let file = read_instance_file(path)?;
                (file.p_x_given_y, file.p_y)
            }
            None => match (&self.p_x_given_y, &self.p_y) {
                (Some(rows), Some(p_y)) => (rows.clone(), p_y.clone()),
                (None, _) => return Err(CliError::Config("p_y given without p_x_given_y".into())),
                (_, None) => return Err(CliError::Config("p_x_given_y given without p_y".into())),
            },
        };
        Ok(Source::Inline {
            rows: rows.iter().map(|r| values(r)).collect(),
            p_y: values(&p_y),
        })
    }

    /// Labels from the config, then from the instance file, if any.
    fn labels(&self) -> Result<Labels, CliError> {
        let mut xs = self.x_values.as_deref().map(values);
        let mut ys = self.y_values.as_deref().map(values);
        if let Some(path) = &self.instance_file {
            let file = read_instance_file(path)?;
            xs = xs.or(file.x_values.as_deref().map(values));
            ys = ys.or(file.y_values.as_deref().map(values));
        }
        Ok((xs, ys))
    }

    pub fn instances(&self) -> Result<Vec<LabeledInstance>, CliError> {
        let (xs, ys) = self.labels()?;
        let relabel = |inst: ProblemInstance| -> Result<ProblemInstance, CliError> {
            let nx = inst.nx();
            let ny = inst.ny();
            let x = xs.clone().or(inst.x_values.clone()).unwrap_or_else(|| (1..=nx).map(|v| v as f64).collect());
            let y = ys.clone().or(inst.y_values.clone()).unwrap_or_else(|| (1..=ny).map(|v| v as f64).collect());
            inst.with_values(x, y)
                .map_err(|e| CliError::Config(format!("x_values/y_values: {e}")))
        };
        match self.source()? {
            Source::Inline { rows, p_y } => {
                let channel = Channel::from_rows(&rows)
                    .map_err(|e| CliError::Config(format!("p_x_given_y: {e}")))?;
                let p_y = Distribution::new(p_y).map_err(|e| CliError::Config(format!("p_y: {e}")))?;
                let inst = ProblemInstance::new(channel, p_y, self.log_base)
                    .map_err(|e| CliError::Core {
                        context: "instance".into(),
                        source: e,
                    })?;
                Ok(vec![LabeledInstance {
                    alpha: None,
                    instance: relabel(inst)?,
                }])
            }
            Source::Watermark(alphas) => alphas
                .into_iter()
                .map(|a| {
                    let params = WatermarkParams::new(a)
                        .map_err(|e| CliError::Config(format!("alpha: {e}")))?;
                    let wm = watermark_instance(params, self.log_base).map_err(|e| CliError::Core {
                        context: format!("watermark alpha {a}"),
                        source: e,
                    })?;
                    Ok(LabeledInstance {
                        alpha: Some(a),
                        instance: relabel(wm.instance)?,
                    })
                })
                .collect(),
        }
    }

    pub fn epsilons(&self) -> Result<Vec<f64>, CliError> {
        let eps = match (&self.epsilon, &self.epsilon_sweep) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either epsilon or epsilon_sweep, not both".into()))
            }
            (None, None) => return Err(CliError::Config("missing epsilon or epsilon_sweep".into())),
            (Some(e), None) => vec![e.0],
            (None, Some(s)) => s.points()?,
        };
        if let Some(bad) = eps.iter().find(|e| **e < 0.0) {
            return Err(CliError::Config(format!("epsilon: {bad} is negative")));
        }
        Ok(eps)
    }

    pub fn search(&self) -> SearchConfig {
        self.oracle.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals_and_decimals() {
        assert_eq!(Num::parse("1/8").unwrap(), 0.125);
        assert_eq!(Num::parse(" 3 / 4 ").unwrap(), 0.75);
        assert_eq!(Num::parse("0.5").unwrap(), 0.5);
        assert!(Num::parse("1/0").is_err());
        assert!(Num::parse("half").is_err());
        let cfg = RunConfig::from_json(r#"{"p_y": ["1/2", 0.5], "p_x_given_y": [[1, 0], [0, 1]], "epsilon": "1/100"}"#)
            .unwrap();
        assert_eq!(cfg.epsilon.unwrap().0, 0.01);
        assert_eq!(values(cfg.p_y.as_ref().unwrap()), [0.5, 0.5]);
    }

    #[test]
    fn diagnostics_name_the_location() {
        let err = RunConfig::from_json("{\n  \"epsilon\": \"x/2\"\n}").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("epsilon:"), "{err}");
        let err = RunConfig::from_json(r#"{"p_y": [0.5, "1/x"]}"#).unwrap_err().to_string();
        assert!(err.contains("p_y[1]"), "{err}");
        let err = RunConfig::from_json(r#"{"epsilonn": 1}"#).unwrap_err().to_string();
        assert!(err.contains("epsilonn"), "{err}");
    }

    #[test]
    fn exactly_one_source() {
        let both = RunConfig::from_json(
            r#"{"p_x_given_y": [[0.5, 0.5], [0.5, 0.5]], "p_y": [0.5, 0.5], "alpha": 0, "epsilon": 0.1}"#,
        )
        .unwrap();
        assert!(matches!(both.source(), Err(CliError::Config(m)) if m.contains("conflicting")));
        let none = RunConfig::from_json(r#"{"epsilon": 0.1}"#).unwrap();
        assert!(matches!(none.source(), Err(CliError::Config(_))));
    }

    #[test]
    fn sweeps() {
        let s = EpsilonSweep {
            start: Num(1e-3),
            stop: Num(1e-1),
            count: 3,
            scale: SweepScale::Log,
        };
        let pts = s.points().unwrap();
        assert!((pts[1] - 1e-2).abs() < 1e-15);
        let bad = EpsilonSweep {
            start: Num(0.2),
            stop: Num(0.1),
            count: 3,
            scale: SweepScale::Linear,
        };
        assert!(bad.points().is_err());
    }

    #[test]
    fn watermark_alphas() {
        let cfg = RunConfig::from_json(r#"{"alpha": [0, 0.5, 1], "epsilon": 0.05, "log_base": "e"}"#).unwrap();
        let insts = cfg.instances().unwrap();
        assert_eq!(insts.len(), 3);
        assert_eq!(insts[2].instance.ny(), 2);
        assert_eq!(insts[0].instance.log_base, LogBase::Natural);
    }
}
