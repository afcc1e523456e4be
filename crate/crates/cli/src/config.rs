//! `key = value` run configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nehari_core::{Family, Nonlinearity, RunParameters, SolverConfig};

const KEYS: [&str; 14] = [
    "dim",
    "res",
    "p",
    "q",
    "r",
    "family",
    "lambda",
    "lambda-list",
    "eps",
    "grad-tol",
    "constraint-tol",
    "max-iters",
    "seed",
    "out-dir",
];

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub lambda_list: Option<Vec<f64>>,
    pub out_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse(&text)
}

/// Parse a configuration. `lambda` may be omitted when `lambda-list` is
/// given; the first listed value is then used.
pub fn parse(text: &str) -> Result<RunConfig, String> {
    let mut entries = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(format!("line {}: unknown key `{key}`", n + 1));
        }
        if entries.insert(key.to_string(), value.to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{key}`", n + 1));
        }
    }

    let lambda_list = entries
        .get("lambda-list")
        .map(|s| {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("lambda-list: {e}")))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let lambda = match (entries.get("lambda"), &lambda_list) {
        (Some(_), _) => number::<f64>(&entries, "lambda")?,
        (None, Some(list)) if !list.is_empty() => list[0],
        _ => return Err("missing key `lambda`".into()),
    };
    let dim = number::<usize>(&entries, "dim")?;
    let p = number::<f64>(&entries, "p")?;
    let eps = optional::<f64>(&entries, "eps")?.unwrap_or(0.0);
    let params = RunParameters::new(dim, p, lambda, eps).map_err(|e| e.to_string())?;
    let family: Family = required(&entries, "family")?.parse().map_err(|e| format!("family: {e}"))?;
    let nonlinearity = Nonlinearity::new(family, number(&entries, "q")?, number(&entries, "r")?).map_err(|e| e.to_string())?;

    let mut solver = SolverConfig::new(params, nonlinearity, number(&entries, "res")?);
    if let Some(v) = optional(&entries, "grad-tol")? {
        solver.grad_tol = v;
    }
    if let Some(v) = optional(&entries, "constraint-tol")? {
        solver.constraint_tol = v;
    }
    if let Some(v) = optional(&entries, "max-iters")? {
        solver.max_iters = v;
    }
    if let Some(v) = optional(&entries, "seed")? {
        solver.seed = v;
    }
    solver.validate().map_err(|e| e.to_string())?;

    Ok(RunConfig {
        solver,
        lambda_list,
        out_dir: entries.get("out-dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    })
}

fn required<'a>(entries: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, String> {
    entries.get(key).map(String::as_str).ok_or_else(|| format!("missing key `{key}`"))
}

fn number<T: std::str::FromStr>(entries: &BTreeMap<String, String>, key: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    required(entries, key)?.parse().map_err(|e| format!("{key}: {e}"))
}

fn optional<T: std::str::FromStr>(entries: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    entries.get(key).map(|s| s.parse().map_err(|e| format!("{key}: {e}"))).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = "dim = 3\nres = 8\np = 2\nq = 4\nr = 4\nfamily = signed\nlambda = 50\n";

    #[test]
    fn reference_config_parses_with_defaults() {
        let cfg = parse(REFERENCE).unwrap();
        assert_eq!(cfg.solver.res, 8);
        assert_eq!(cfg.solver.seed, 0);
        assert_eq!(cfg.solver.max_iters, 5000);
        assert_eq!(cfg.solver.params.lambda(), 50.0);
        assert_eq!(cfg.out_dir, PathBuf::from("."));
        assert!(cfg.lambda_list.is_none());
    }

    #[test]
    fn comments_and_overrides() {
        let text = format!("# reference\n{REFERENCE}seed = 7 # other seed\ngrad-tol = 1e-8\nlambda-list = 1, 2, 4\n");
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.solver.seed, 7);
        assert_eq!(cfg.solver.grad_tol, 1e-8);
        assert_eq!(cfg.lambda_list, Some(vec![1.0, 2.0, 4.0]));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse(&format!("{REFERENCE}colour = red\n")).unwrap_err().contains("unknown key"));
        assert!(parse(&format!("{REFERENCE}lambda = 3\n")).unwrap_err().contains("duplicate"));
        assert!(parse("dim = 3\n").is_err());
        assert!(parse(&REFERENCE.replace("q = 4", "q = 6")).is_err());
        assert!(parse(&REFERENCE.replace("signed", "odd")).is_err());
        assert!(parse(&REFERENCE.replace("res = 8", "res = 1")).is_err());
    }
}
