use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nlsp_core::calibration::Calibration;
use serde::{Deserialize, Serialize};

/// Run-level settings that are not part of the calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Grid for the static computations (soliton, spectrum, curves).
    pub static_n_points: usize,
    pub static_r_max: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            static_n_points: 4096,
            static_r_max: 30.0,
        }
    }
}

/// Effective configuration: calibration (file or defaults) with inline overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub calibration_source: Option<PathBuf>,
    pub calibration: Calibration,
    pub run: RunSection,
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    calibration_file: Option<PathBuf>,
    calibration: Option<toml::Table>,
    run: Option<RunSection>,
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl RunConfig {
    /// Calibration precedence: the config file's `calibration_file`, then the
    /// environment variable, then built-in defaults; `[calibration]` overrides apply last.
    pub fn load(path: Option<&Path>, seed: u64) -> Result<RunConfig> {
        let file: ConfigFile = match path {
            Some(p) => {
                let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&s).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ConfigFile::default(),
        };
        let source = match &file.calibration_file {
            Some(f) => {
                let base = path.and_then(Path::parent).unwrap_or(Path::new("."));
                Some(base.join(f))
            }
            None => Calibration::env_path(),
        };
        let mut cal = match &source {
            Some(p) => Calibration::load(p).with_context(|| format!("loading calibration {}", p.display()))?,
            None => Calibration::default(),
        };
        if let Some(t) = file.calibration {
            let mut v = serde_json::to_value(&cal)?;
            merge(&mut v, serde_json::to_value(t)?);
            cal = serde_json::from_value(v).context("invalid [calibration] overrides")?;
        }
        cal.validate()?;
        let run = file.run.unwrap_or_default();
        if run.static_n_points < 8 || !(run.static_r_max > 0.0) {
            bail!("invalid static grid");
        }
        Ok(RunConfig {
            calibration_source: source,
            calibration: cal,
            run,
            seed,
        })
    }
}

/// "1e2..1e6" (decades, `per_decade` points each) or a comma list.
pub fn parse_omegas(s: &str, per_decade: usize) -> Result<Vec<f64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
        if !(a > 0.0 && b >= a) {
            bail!("bad omega range {s}");
        }
        let n = ((b / a).log10() * per_decade as f64).round() as usize;
        return Ok((0..=n)
            .map(|k| a * 10f64.powf(k as f64 / per_decade.max(1) as f64))
            .collect());
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(Into::into)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decades() {
        let w = parse_omegas("1e2..1e6", 1).unwrap();
        assert_eq!(w.len(), 5);
        assert!((w[4] - 1e6).abs() < 1e-6);
        assert_eq!(parse_omegas("3,4.5", 1).unwrap(), vec![3.0, 4.5]);
    }

    #[test]
    fn overrides_merge_into_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[calibration]\nomega = 50.0\n[calibration.thresholds]\ndelta_x = 0.25\n").unwrap();
        let c = RunConfig::load(Some(&p), 1).unwrap();
        assert_eq!(c.calibration.omega, 50.0);
        assert_eq!(c.calibration.thresholds.delta_x, 0.25);
        assert_eq!(c.calibration.thresholds.delta_e, 0.1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[run]\nbogus = 1\n").unwrap();
        assert!(RunConfig::load(Some(&p), 1).is_err());
    }
}
