//! Runs scenarios and writes their outputs under `out/<scenario>/`.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::Config;
use crate::output::{write_all, Artifact};
use crate::scenarios::{run_scenario, Check, Scenario, ScenarioOutput};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{scenario}: {source}")]
    Scenario {
        scenario: Scenario,
        source: iodine_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub seed: u64,
    pub dir: PathBuf,
    pub checks: Vec<Check>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn summary(scenario: Scenario, seed: u64, config_hash: &str, out: &ScenarioOutput) -> Artifact {
    let v = json!({
        "scenario": scenario.name(),
        "seed": seed,
        "config_hash": config_hash,
        "version": VERSION,
        "results": out.results,
        "checks": out.checks,
    });
    let mut contents = serde_json::to_string_pretty(&v).expect("json serialises");
    contents.push('\n');
    Artifact {
        name: "summary.json".into(),
        contents,
    }
}

fn run_one(
    scenario: Scenario,
    cfg: &Config,
    hash: &str,
    master_seed: u64,
    out_dir: &Path,
) -> Result<RunRecord, RunError> {
    let seed = scenario.seed(master_seed);
    let out = run_scenario(scenario, cfg, seed).map_err(|source| RunError::Scenario { scenario, source })?;
    let dir = out_dir.join(scenario.name());
    let mut files = out.artifacts.clone();
    files.push(summary(scenario, seed, hash, &out));
    write_all(&dir, &files).map_err(|source| RunError::Write {
        path: dir.clone(),
        source,
    })?;
    Ok(RunRecord {
        scenario,
        seed,
        dir,
        checks: out.checks,
    })
}

/// Runs `scenarios` on up to `jobs` threads. Records come back in the
/// order requested.
pub fn run(
    scenarios: &[Scenario],
    cfg: &Config,
    master_seed: u64,
    out_dir: &Path,
    jobs: usize,
) -> Vec<Result<RunRecord, RunError>> {
    let hash = cfg.hash();
    let jobs = jobs.clamp(1, scenarios.len().max(1));
    let mut slots: Vec<Option<Result<RunRecord, RunError>>> = (0..scenarios.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(sc) = scenarios.get(i) else { break };
                let r = run_one(*sc, cfg, &hash, master_seed, out_dir);
                results.lock().expect("no poisoned runs")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Parses a comma-separated list; `all` expands to every scenario.
pub fn parse_scenarios(list: &str) -> Result<Vec<Scenario>, String> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            out.extend(Scenario::ALL);
        } else {
            out.push(item.parse()?);
        }
    }
    if out.is_empty() {
        return Err("no scenario given".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|s| seen.insert(*s));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_scenarios("all").unwrap().len(), 9);
        assert_eq!(
            parse_scenarios("allan, allan,pressure-shift").unwrap(),
            vec![Scenario::Allan, Scenario::PressureShift]
        );
        assert!(parse_scenarios("").is_err());
        assert!(parse_scenarios("alan").unwrap_err().contains("allan"));
    }
}
