//! Line-based `key = value` experiment configuration.

use crate::error::{GlbError, Result};
use crate::solver::{InitMode, Method};
use std::collections::BTreeMap;

/// Study selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Minimize,
    Sweep,
    ProbeMonotonicity,
    ProbeClearing,
    ProbeAppendix,
    Report,
}

impl Study {
    pub fn parse(s: &str) -> Option<Study> {
        match s {
            "minimize" => Some(Study::Minimize),
            "sweep" => Some(Study::Sweep),
            "probe-monotonicity" => Some(Study::ProbeMonotonicity),
            "probe-clearing" => Some(Study::ProbeClearing),
            "probe-appendix" => Some(Study::ProbeAppendix),
            "report" => Some(Study::Report),
            _ => None,
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            Study::Minimize => "minimize",
            Study::Sweep => "sweep",
            Study::ProbeMonotonicity => "probe-monotonicity",
            Study::ProbeClearing => "probe-clearing",
            Study::ProbeAppendix => "probe-appendix",
            Study::Report => "report",
        }
    }
}

/// Validated experiment configuration.
///
/// Recognized keys and defaults:
/// - `study` (required): minimize | sweep | probe-monotonicity |
///   probe-clearing | probe-appendix | report
/// - `n` = 2, `sites` = 32, `length` = 1.0, `degree` = 1
/// - `epsilon`: single value or comma-separated decreasing schedule
///   (default 0.1)
/// - `method` = gradient-flow | nonlinear-cg (default gradient-flow)
/// - `tolerance` = 1e-4, `max_iterations` = 200000, `initial_step` = 1e-3
/// - `init` = vacuum | random | vortex-ansatz (default vortex-ansatz when
///   degree != 0, else vacuum)
/// - `seed` = 0, `out` = glb-out-<study>
/// - `threshold` = 0.5 (vortex detection), `eta0` = 0.1,
///   `radius_r` = length/4 (clearing ball), `centers` = 3
/// - `radii`: comma-separated increasing list (default dyadic in
///   [8h, length/4])
/// - `snapshot`: input snapshot path (report study)
/// - `pi_normalized` = false (measure normalization π|log ε|)
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub study: Study,
    pub n: usize,
    pub sites: usize,
    pub length: f64,
    pub degree: i64,
    pub epsilons: Vec<f64>,
    pub method: Method,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub init: Option<InitMode>,
    pub seed: u64,
    pub out: Option<String>,
    pub threshold: f64,
    pub eta0: f64,
    pub radius_r: Option<f64>,
    pub centers: usize,
    pub radii: Option<Vec<f64>>,
    pub snapshot: Option<String>,
    pub pi_normalized: bool,
    /// Raw key/value echo for the manifest.
    pub echo: BTreeMap<String, String>,
}

fn parse_err(line: usize, key: &str, msg: &str) -> GlbError {
    GlbError::Parse(format!("line {line}, key `{key}`: {msg}"))
}

/// Parse and validate a configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut seen: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(GlbError::Parse(format!(
                "line {line_no}: expected `key = value`, got `{line}`"
            )));
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(GlbError::Parse(format!("line {line_no}: empty key")));
        }
        if let Some((first, _)) = seen.get(&key) {
            return Err(GlbError::Parse(format!(
                "duplicate key `{key}` on lines {first} and {line_no}"
            )));
        }
        seen.insert(key, (line_no, value));
    }

    const KNOWN: &[&str] = &[
        "study",
        "n",
        "sites",
        "length",
        "degree",
        "epsilon",
        "method",
        "tolerance",
        "max_iterations",
        "initial_step",
        "init",
        "seed",
        "out",
        "threshold",
        "eta0",
        "radius_r",
        "centers",
        "radii",
        "snapshot",
        "pi_normalized",
    ];
    for (key, (line, _)) in &seen {
        if !KNOWN.contains(&key.as_str()) {
            return Err(GlbError::Parse(format!(
                "line {line}: unknown key `{key}`"
            )));
        }
    }

    let get = |key: &str| seen.get(key).map(|(l, v)| (*l, v.as_str()));

    let f64_of = |key: &str| -> Result<Option<f64>> {
        match get(key) {
            None => Ok(None),
            Some((l, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(l, key, &format!("not a number: `{v}`"))),
        }
    };
    let usize_of = |key: &str| -> Result<Option<usize>> {
        match get(key) {
            None => Ok(None),
            Some((l, v)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| parse_err(l, key, &format!("not a nonnegative integer: `{v}`"))),
        }
    };

    let study = match get("study") {
        None => return Err(GlbError::Parse("missing required key `study`".into())),
        Some((l, v)) => Study::parse(v).ok_or_else(|| parse_err(l, "study", &format!("unknown study `{v}`")))?,
    };

    let n = usize_of("n")?.unwrap_or(2);
    if n != 2 && n != 3 {
        let l = get("n").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "n", &format!("dimension must be 2 or 3, got {n}")));
    }
    let sites = usize_of("sites")?.unwrap_or(32);
    if sites < 4 {
        let l = get("sites").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "sites", "must be at least 4"));
    }
    let length = f64_of("length")?.unwrap_or(1.0);
    if !(length > 0.0) {
        let l = get("length").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "length", "must be positive"));
    }
    let degree = match get("degree") {
        None => 1,
        Some((l, v)) => v
            .parse::<i64>()
            .map_err(|_| parse_err(l, "degree", &format!("not an integer: `{v}`")))?,
    };

    let epsilons = match get("epsilon") {
        None => vec![0.1],
        Some((l, v)) => {
            let parts: Result<Vec<f64>> = v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(l, "epsilon", &format!("not a number: `{p}`")))
                })
                .collect();
            let parts = parts?;
            for &e in &parts {
                if !(e > 0.0) {
                    return Err(parse_err(l, "epsilon", &format!("must be positive, got {e}")));
                }
            }
            for w in parts.windows(2) {
                if w[1] >= w[0] {
                    return Err(parse_err(
                        l,
                        "epsilon",
                        "schedule must be strictly decreasing",
                    ));
                }
            }
            parts
        }
    };

    let method = match get("method") {
        None => Method::GradientFlow,
        Some((l, v)) => match v {
            "gradient-flow" => Method::GradientFlow,
            "nonlinear-cg" => Method::NonlinearCg,
            _ => return Err(parse_err(l, "method", &format!("unknown method `{v}`"))),
        },
    };
    let tolerance = f64_of("tolerance")?.unwrap_or(1e-4);
    if !(tolerance > 0.0) {
        let l = get("tolerance").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "tolerance", "must be positive"));
    }
    let max_iterations = usize_of("max_iterations")?.unwrap_or(200_000);
    if max_iterations < 1 {
        let l = get("max_iterations").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "max_iterations", "must be at least 1"));
    }
    let initial_step = f64_of("initial_step")?.unwrap_or(1e-3);
    if !(initial_step > 0.0) {
        let l = get("initial_step").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "initial_step", "must be positive"));
    }

    let init = match get("init") {
        None => None,
        Some((l, v)) => Some(match v {
            "vacuum" => InitMode::Vacuum,
            "random" => InitMode::Random,
            "vortex-ansatz" => InitMode::VortexAnsatz,
            _ => return Err(parse_err(l, "init", &format!("unknown init mode `{v}`"))),
        }),
    };

    let seed = match get("seed") {
        None => 0,
        Some((l, v)) => v
            .parse::<u64>()
            .map_err(|_| parse_err(l, "seed", &format!("not a u64: `{v}`")))?,
    };
    let out = get("out").map(|(_, v)| v.to_string());

    let threshold = f64_of("threshold")?.unwrap_or(0.5);
    if !(threshold > 0.0 && threshold < 1.0) {
        let l = get("threshold").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "threshold", "must lie in (0,1)"));
    }
    let eta0 = f64_of("eta0")?.unwrap_or(0.1);
    if !(eta0 > 0.0) {
        let l = get("eta0").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "eta0", "must be positive"));
    }
    let radius_r = f64_of("radius_r")?;
    if let Some(r) = radius_r {
        if !(r > 0.0) {
            let l = get("radius_r").map(|(l, _)| l).unwrap_or(0);
            return Err(parse_err(l, "radius_r", "must be positive"));
        }
    }
    let centers = usize_of("centers")?.unwrap_or(3);
    if centers < 1 {
        let l = get("centers").map(|(l, _)| l).unwrap_or(0);
        return Err(parse_err(l, "centers", "must be at least 1"));
    }

    let radii = match get("radii") {
        None => None,
        Some((l, v)) => {
            let parts: Result<Vec<f64>> = v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(l, "radii", &format!("not a number: `{p}`")))
                })
                .collect();
            let parts = parts?;
            for w in parts.windows(2) {
                if w[1] <= w[0] {
                    return Err(parse_err(l, "radii", "must be strictly increasing"));
                }
            }
            Some(parts)
        }
    };

    let snapshot = get("snapshot").map(|(_, v)| v.to_string());
    let pi_normalized = match get("pi_normalized") {
        None => false,
        Some((l, v)) => v
            .parse::<bool>()
            .map_err(|_| parse_err(l, "pi_normalized", &format!("not a bool: `{v}`")))?,
    };

    let echo: BTreeMap<String, String> = seen
        .into_iter()
        .map(|(k, (_, v))| (k, v))
        .collect();

    Ok(ExperimentConfig {
        study,
        n,
        sites,
        length,
        degree,
        epsilons,
        method,
        tolerance,
        max_iterations,
        initial_step,
        init,
        seed,
        out,
        threshold,
        eta0,
        radius_r,
        centers,
        radii,
        snapshot,
        pi_normalized,
        echo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_valid_config() {
        let cfg = parse_config(
            "study = minimize\nn = 2\nsites = 16\nlength = 1.0\ndegree = 1\nepsilon = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.study, Study::Minimize);
        assert_eq!(cfg.sites, 16);
        assert_eq!(cfg.epsilons, vec![0.1]);
        assert_eq!(cfg.tolerance, 1e-4); // documented default
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config("# comment\nstudy = sweep # trailing\n\nepsilon = 0.2, 0.1\n").unwrap();
        assert_eq!(cfg.study, Study::Sweep);
        assert_eq!(cfg.epsilons, vec![0.2, 0.1]);
    }

    #[test]
    fn negative_epsilon_names_key() {
        let err = parse_config("study = minimize\nepsilon = -0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epsilon"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let err = parse_config("study = minimize\nseed = 1\nseed = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("seed") && msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config("study = minimize\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn missing_study_rejected() {
        assert!(parse_config("n = 2\n").is_err());
    }

    #[test]
    fn type_mismatch_named() {
        let err = parse_config("study = minimize\nsites = many\n").unwrap_err();
        assert!(err.to_string().contains("sites"));
    }

    #[test]
    fn nondecreasing_schedule_rejected() {
        assert!(parse_config("study = sweep\nepsilon = 0.1, 0.1\n").is_err());
        assert!(parse_config("study = sweep\nepsilon = 0.1, 0.2\n").is_err());
    }
}
