//! Run configuration: a JSON document, with scalar fields overridable from flags.

use std::path::{Path, PathBuf};

use alpha_bundle::families::{
    expression_quad_hint, make_exponential, make_family_from_expression, parse_density,
};
use alpha_bundle::verify::GeodesicCriterion;
use alpha_bundle::{make_normal, ExpectationStrategy, ParameterDomain, SampleSpace, StatisticalFamily};
use serde::Deserialize;

/// A configuration problem; always exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<FamilySpec>,
    pub alpha: Option<f64>,
    pub theta: Option<Vec<f64>>,
    pub grid: Option<Vec<Vec<f64>>>,
    pub strategy: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    #[serde(default)]
    pub geodesic: GeodesicSpec,
    #[serde(default)]
    pub transport: TransportSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum FamilySpec {
    Builtin {
        builtin: String,
    },
    Expression {
        expression: String,
        /// Per-coordinate open bounds; `null` is unbounded.
        domain: Vec<(Option<f64>, Option<f64>)>,
        #[serde(default)]
        sample_space: Option<(Option<f64>, Option<f64>)>,
        /// Expressions in `th1..thn` for the quadrature location and scale.
        location: String,
        scale: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSpec {
    pub v0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    /// `θ + t·velocity`.
    #[default]
    Line,
    /// The α-geodesic through `θ` with initial velocity `velocity`.
    Geodesic,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    #[serde(default)]
    pub curve: CurveKind,
    pub velocity: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    /// Initial frame rows; identity when absent.
    pub frame: Option<Vec<Vec<f64>>>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Value(f64),
    /// `"inf"` disables the threshold.
    Word(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub checks: Option<Vec<String>>,
    pub samples: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub tolerance: Option<Tolerance>,
    pub safe_box: Option<Vec<(f64, f64)>>,
    /// Coordinate mapped to its logarithm by the gauge-law check.
    pub log_coordinate: Option<usize>,
    pub geodesic: Option<GeodesicVerifySpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicVerifySpec {
    pub theta0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub epsilon: Option<f64>,
}

pub const CHECKS: [&str; 7] = [
    "bundle_chart_agreement",
    "structure_equations",
    "fundamental_fields",
    "lift_equivariance",
    "bianchi",
    "gauge_law",
    "geodesic_criterion",
];

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub theta: Option<Vec<Vec<f64>>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub strategy: Option<String>,
}

/// Points given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaList(pub Vec<Vec<f64>>);

/// `"0,1"` is one point; `"0,1;2,0.5"` a grid.
pub fn parse_theta_list(s: &str) -> Result<ThetaList, String> {
    s.split(';')
        .map(|point| {
            point
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad coordinate '{v}' in '{s}'")))
                .collect()
        })
        .collect::<Result<_, _>>()
        .map(ThetaList)
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(a) = o.alpha {
            self.alpha = Some(a);
        }
        if let Some(mut t) = o.theta {
            if t.len() == 1 {
                self.theta = t.pop();
                self.grid = None;
            } else {
                self.grid = Some(t);
                self.theta = None;
            }
        }
        if o.out.is_some() {
            self.out = o.out;
        }
        if o.format.is_some() {
            self.format = o.format;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.strategy.is_some() {
            self.strategy = o.strategy;
        }
    }

    pub fn family(&self) -> Result<StatisticalFamily, ConfigError> {
        let spec = self.family.as_ref().ok_or_else(|| bad("missing family spec"))?;
        match spec {
            FamilySpec::Builtin { builtin } => match builtin.as_str() {
                "normal" => Ok(make_normal()),
                "exponential" => Ok(make_exponential()),
                other => Err(bad(format!("unknown built-in family '{other}'"))),
            },
            FamilySpec::Expression {
                expression,
                domain,
                sample_space,
                location,
                scale,
            } => {
                let n = domain.len();
                if n == 0 {
                    return Err(bad("expression family needs a non-empty domain"));
                }
                let parse = |src: &str, what: &str| {
                    parse_density(src, n).map_err(|e| bad(format!("{what}: {e}")))
                };
                let expr = parse(expression, "expression")?;
                let hint = expression_quad_hint(parse(location, "location")?, parse(scale, "scale")?);
                let bounds = domain
                    .iter()
                    .map(|&(lo, hi)| (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)))
                    .collect();
                let space = match sample_space {
                    None => SampleSpace::RealLine,
                    Some((lo, hi)) => SampleSpace::interval(
                        lo.unwrap_or(f64::NEG_INFINITY),
                        hi.unwrap_or(f64::INFINITY),
                    )
                    .map_err(|e| bad(e.to_string()))?,
                };
                make_family_from_expression(expr, space, ParameterDomain::new(bounds), hint)
                    .map_err(|e| bad(e.to_string()))
            }
        }
    }

    pub fn alpha(&self) -> Result<f64, ConfigError> {
        let a = self.alpha.unwrap_or(0.0);
        if a.is_finite() {
            Ok(a)
        } else {
            Err(bad(format!("alpha must be finite, got {a}")))
        }
    }

    pub fn strategy(&self) -> Result<ExpectationStrategy, ConfigError> {
        match &self.strategy {
            None => Ok(ExpectationStrategy::ClosedForm),
            Some(s) => s.parse().map_err(|e: alpha_bundle::Error| bad(e.to_string())),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(alpha_bundle::verify::DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// The θ grid, each point checked against the family's dimension and domain.
    pub fn points(&self, family: &StatisticalFamily) -> Result<Vec<Vec<f64>>, ConfigError> {
        let points = match (&self.theta, &self.grid) {
            (Some(_), Some(_)) => return Err(bad("give either theta or grid, not both")),
            (Some(t), None) => vec![t.clone()],
            (None, Some(g)) if g.is_empty() => return Err(bad("grid must be non-empty")),
            (None, Some(g)) => g.clone(),
            (None, None) => return Err(bad("missing theta")),
        };
        for p in &points {
            self.check_point(family, p, "theta")?;
        }
        Ok(points)
    }

    /// The single starting point of a curve.
    pub fn start(&self, family: &StatisticalFamily) -> Result<Vec<f64>, ConfigError> {
        let mut pts = self.points(family)?;
        if pts.len() != 1 {
            return Err(bad("curves need a single theta, not a grid"));
        }
        Ok(pts.remove(0))
    }

    fn check_point(&self, family: &StatisticalFamily, p: &[f64], what: &str) -> Result<(), ConfigError> {
        check_dim(family, p, what)?;
        if !family.domain().contains(p) {
            return Err(bad(format!("{what} {p:?} is outside the parameter domain")));
        }
        Ok(())
    }

    pub fn geodesic_params(&self, family: &StatisticalFamily) -> Result<(Vec<f64>, f64, f64), ConfigError> {
        let g = &self.geodesic;
        let v0 = g.v0.clone().ok_or_else(|| bad("geodesic.v0 is required"))?;
        check_dim(family, &v0, "geodesic.v0")?;
        Ok((v0, positive(g.t_end.unwrap_or(1.0), "geodesic.t_end")?, positive(g.dt.unwrap_or(1e-3), "geodesic.dt")?))
    }

    pub fn verify_geodesic(&self, family: &StatisticalFamily) -> Result<GeodesicCriterion, ConfigError> {
        let spec = self.verify.geodesic.clone().unwrap_or_default();
        let theta0 = match spec.theta0 {
            Some(t) => t,
            None => match (&self.theta, &self.grid) {
                (Some(t), _) => t.clone(),
                (None, Some(g)) if !g.is_empty() => g[0].clone(),
                _ => alpha_bundle::verify::default_safe_box(family)
                    .iter()
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            },
        };
        self.check_point(family, &theta0, "verify.geodesic.theta0")?;
        let n = theta0.len();
        let v0 = spec.v0.unwrap_or_else(|| {
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            v
        });
        check_dim(family, &v0, "verify.geodesic.v0")?;
        let mut c = GeodesicCriterion::new(theta0, v0, spec.alpha.map_or_else(|| self.alpha(), Ok)?);
        if let Some(t) = spec.t_end {
            c.t_end = positive(t, "verify.geodesic.t_end")?;
        }
        if let Some(dt) = spec.dt {
            c.dt = positive(dt, "verify.geodesic.dt")?;
        }
        if let Some(e) = spec.epsilon {
            c.epsilon = positive(e, "verify.geodesic.epsilon")?;
        }
        Ok(c)
    }

    pub fn tolerance(&self) -> Result<Option<f64>, ConfigError> {
        match &self.verify.tolerance {
            None => Ok(None),
            Some(Tolerance::Value(v)) if *v >= 0.0 => Ok(Some(*v)),
            Some(Tolerance::Value(v)) => Err(bad(format!("tolerance must be >= 0, got {v}"))),
            Some(Tolerance::Word(w)) if matches!(w.as_str(), "inf" | "infinity") => Ok(Some(f64::INFINITY)),
            Some(Tolerance::Word(w)) => Err(bad(format!("unrecognised tolerance '{w}'"))),
        }
    }

    pub fn checks(&self) -> Result<Vec<String>, ConfigError> {
        let checks = match &self.verify.checks {
            None => CHECKS.iter().map(|s| s.to_string()).collect(),
            Some(c) if c.is_empty() => return Err(bad("verify.checks must be non-empty")),
            Some(c) => c.clone(),
        };
        for c in &checks {
            if !CHECKS.contains(&c.as_str()) {
                return Err(bad(format!("unknown check '{c}'; expected one of {CHECKS:?}")));
            }
        }
        Ok(checks)
    }
}

pub fn check_dim(family: &StatisticalFamily, v: &[f64], what: &str) -> Result<(), ConfigError> {
    if v.len() != family.dim() {
        return Err(bad(format!(
            "{what} has {} components, the family has {}",
            v.len(),
            family.dim()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(bad(format!("{what} must be finite")));
    }
    Ok(())
}

pub fn positive(v: f64, what: &str) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("{what} must be positive, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> RunConfig {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn theta_lists() {
        assert_eq!(parse_theta_list("0,1").unwrap().0, vec![vec![0.0, 1.0]]);
        assert_eq!(
            parse_theta_list("0, 1; 2,0.5").unwrap().0,
            vec![vec![0.0, 1.0], vec![2.0, 0.5]]
        );
        assert!(parse_theta_list("0,x").is_err());
    }

    #[test]
    fn family_specs() {
        let c = parse(r#"{"family": {"builtin": "normal"}}"#);
        assert_eq!(c.family().unwrap().name(), "normal");
        let c = parse(
            r#"{"family": {"expression": "-(x - th1)^2 / (2 * th2^2) - log(th2) - 0.5 * log(2 * pi)",
                "domain": [[null, null], [0, null]], "location": "th1", "scale": "th2"}}"#,
        );
        assert_eq!(c.family().unwrap().dim(), 2);
        assert!(RunConfig::default().family().is_err());
        assert!(parse(r#"{"family": {"builtin": "cauchy"}}"#).family().is_err());
        let bad_expr = parse(r#"{"family": {"expression": "x +", "domain": [[null, null]], "location": "th1", "scale": "1"}}"#);
        assert!(bad_expr.family().unwrap_err().0.contains("line 1, column 3"));
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = parse(r#"{"alpha": 0.5, "grid": [[0, 1], [1, 1]], "seed": 3}"#);
        c.apply(Overrides {
            alpha: Some(-1.0),
            theta: Some(vec![vec![0.0, 2.0]]),
            seed: Some(9),
            ..Overrides::default()
        });
        assert_eq!(c.alpha, Some(-1.0));
        assert_eq!(c.theta, Some(vec![0.0, 2.0]));
        assert!(c.grid.is_none());
        assert_eq!(c.seed(), 9);
    }

    #[test]
    fn validation() {
        let f = make_normal();
        let c = parse(r#"{"theta": [0, -1]}"#);
        assert!(c.points(&f).is_err());
        let c = parse(r#"{"grid": []}"#);
        assert!(c.points(&f).is_err());
        let c = parse(r#"{"theta": [0, 1], "geodesic": {"v0": [1, 0], "dt": 0}}"#);
        assert!(c.geodesic_params(&f).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"thetaa": [0, 1]}"#).is_err());
        let c = parse(r#"{"verify": {"tolerance": "inf", "checks": ["bianchi"]}}"#);
        assert_eq!(c.tolerance().unwrap(), Some(f64::INFINITY));
        assert_eq!(c.checks().unwrap(), vec!["bianchi".to_string()]);
        let c = parse(r#"{"verify": {"checks": ["nope"]}}"#);
        assert!(c.checks().is_err());
        let c = parse(r#"{"strategy": "quad:1"}"#);
        assert!(c.strategy().is_err());
    }
}
