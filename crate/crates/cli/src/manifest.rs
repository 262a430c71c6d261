//! Run manifests and scenario files.
//!
//! A scenario file holds one scenario:
//!
//! ```toml
//! schema_version = 1
//!
//! [scenario]
//! nodes = 20
//! operators = 10
//! key_groups_per_operator = 40
//! total_ticks = 300
//!
//! [scenario.optimizer]
//! kind = "milp"
//! max_migrations = 10
//! ```
//!
//! A manifest lists scenario files (relative to the manifest), may define
//! further scenarios inline, and carries the output directory, overrides and
//! the comparison set:
//!
//! ```toml
//! schema_version = 1
//! out = "results"
//! scenario_files = ["large.toml"]
//! compare = ["milp", "flux", "potc"]
//!
//! [overrides]
//! seed = 7
//!
//! [scenarios.small]
//! nodes = 4
//! operators = 2
//! key_groups_per_operator = 8
//! total_ticks = 50
//! ```
//!
//! Either kind of file can be handed to `run`, `compare` and `validate`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use reconfig::sim::OptimizerKind;
use reconfig::ScenarioConfig;
use serde::Deserialize;

use crate::{CliError, Problem, Result, SCHEMA_VERSION};

/// Values that replace the corresponding scenario settings.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub optimizer: Option<OptimizerKind>,
    pub max_migrations: Option<usize>,
    pub max_migr_cost: Option<f64>,
    pub max_ld: Option<f64>,
    pub ticks: Option<u64>,
}

impl Overrides {
    /// `self` where set, `fallback` otherwise.
    pub fn or(&self, fallback: &Overrides) -> Overrides {
        Overrides {
            seed: self.seed.or(fallback.seed),
            optimizer: self.optimizer.or(fallback.optimizer),
            max_migrations: self.max_migrations.or(fallback.max_migrations),
            max_migr_cost: self.max_migr_cost.or(fallback.max_migr_cost),
            max_ld: self.max_ld.or(fallback.max_ld),
            ticks: self.ticks.or(fallback.ticks),
        }
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.optimizer {
            cfg.optimizer.kind = k;
        }
        // the two budget kinds are exclusive; an override of one clears the other
        if let Some(m) = self.max_migrations {
            cfg.optimizer.max_migrations = Some(m);
            cfg.optimizer.max_migr_cost = None;
        }
        if let Some(c) = self.max_migr_cost {
            cfg.optimizer.max_migr_cost = Some(c);
            cfg.optimizer.max_migrations = None;
        }
        if let Some(l) = self.max_ld {
            cfg.optimizer.max_ld = l;
        }
        if let Some(t) = self.ticks {
            cfg.total_ticks = t;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedScenario {
    pub name: String,
    pub config: ScenarioConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub out: Option<PathBuf>,
    pub scenarios: Vec<NamedScenario>,
    pub overrides: Overrides,
    /// Optimizers replayed on each scenario's tape by `compare`.
    pub compare: Vec<OptimizerKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    schema_version: u32,
    out: Option<PathBuf>,
    #[serde(default)]
    scenario_files: Vec<PathBuf>,
    #[serde(default)]
    scenarios: BTreeMap<String, ScenarioConfig>,
    #[serde(default)]
    compare: Vec<String>,
    #[serde(default)]
    overrides: Overrides,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    scenario: ScenarioConfig,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

fn check_version(found: u32, key: &str) -> Option<Problem> {
    (found != SCHEMA_VERSION).then(|| {
        Problem::new(
            key,
            format!("unsupported version {found}; expected {SCHEMA_VERSION}"),
        )
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string())
}

/// Reads a scenario file.
pub fn load_scenario(path: &Path) -> Result<NamedScenario> {
    let file: ScenarioFile = parse(path, &read(path)?)?;
    if let Some(p) = check_version(file.schema_version, "schema_version") {
        return Err(CliError::Invalid(vec![p]));
    }
    Ok(NamedScenario {
        name: stem(path),
        config: file.scenario,
    })
}

/// Reads a manifest, or a lone scenario file as a one-scenario manifest.
/// Scenario files named by a manifest are resolved against its directory.
pub fn load(path: &Path) -> Result<RunManifest> {
    let text = read(path)?;
    let table: toml::Table = parse(path, &text)?;
    if table.contains_key("scenario") {
        return Ok(RunManifest {
            out: None,
            scenarios: vec![load_scenario(path)?],
            overrides: Overrides::default(),
            compare: Vec::new(),
        });
    }
    let file: ManifestFile = parse(path, &text)?;
    let mut problems: Vec<Problem> = check_version(file.schema_version, "schema_version")
        .into_iter()
        .collect();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut scenarios = Vec::new();
    for rel in &file.scenario_files {
        scenarios.push(load_scenario(&base.join(rel))?);
    }
    for (name, config) in file.scenarios {
        scenarios.push(NamedScenario { name, config });
    }
    if scenarios.is_empty() {
        problems.push(Problem::new("scenario_files", "no scenarios listed"));
    }
    let mut seen = BTreeMap::new();
    for s in &scenarios {
        if seen.insert(s.name.clone(), ()).is_some() {
            problems.push(Problem::new(
                format!("scenarios.{}", s.name),
                "scenario name used more than once",
            ));
        }
    }
    let mut compare = Vec::new();
    for (i, name) in file.compare.iter().enumerate() {
        match OptimizerKind::parse(name) {
            Some(k) => compare.push(k),
            None => problems.push(Problem::new(
                format!("compare[{i}]"),
                unknown_optimizer(name),
            )),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Invalid(problems));
    }
    Ok(RunManifest {
        out: file.out.map(|o| base.join(o)),
        scenarios,
        overrides: file.overrides,
        compare,
    })
}

pub fn unknown_optimizer(name: &str) -> String {
    let known: Vec<&str> = OptimizerKind::ALL.iter().map(|k| k.name()).collect();
    format!(
        "unknown optimizer `{name}`; expected one of {}",
        known.join(", ")
    )
}

impl RunManifest {
    /// Scenarios with `flags` applied over the manifest's own overrides.
    pub fn resolved(&self, flags: &Overrides) -> Vec<NamedScenario> {
        let o = flags.or(&self.overrides);
        self.scenarios
            .iter()
            .map(|s| {
                let mut s = s.clone();
                o.apply(&mut s.config);
                s
            })
            .collect()
    }

    /// Every offending key across the resolved scenarios, prefixed with the
    /// scenario name.
    pub fn problems(&self, flags: &Overrides) -> Vec<Problem> {
        self.resolved(flags)
            .iter()
            .flat_map(|s| {
                s.config
                    .problems()
                    .into_iter()
                    .map(move |(k, m)| Problem::new(format!("{}.{k}", s.name), m))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const SMALL: &str = "nodes = 4\noperators = 2\nkey_groups_per_operator = 8\ntotal_ticks = 50\n";

    #[test]
    fn manifest_mixes_files_and_inline_scenarios() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "a.toml",
            &format!("schema_version = 1\n[scenario]\n{SMALL}"),
        );
        let m = write(
            dir.path(),
            "m.toml",
            &format!(
                "schema_version = 1\nout = \"res\"\nscenario_files = [\"a.toml\"]\ncompare = [\"milp\", \"flux\"]\n\
                 [overrides]\nseed = 9\n[scenarios.b]\n{SMALL}"
            ),
        );
        let man = load(&m).unwrap();
        assert_eq!(
            man.scenarios
                .iter()
                .map(|s| s.name.as_str())
                .collect::<Vec<_>>(),
            ["a", "b"]
        );
        assert_eq!(man.compare, [OptimizerKind::Milp, OptimizerKind::Flux]);
        assert_eq!(man.out, Some(dir.path().join("res")));
        let flags = Overrides {
            max_migrations: Some(3),
            ..Default::default()
        };
        let r = man.resolved(&flags);
        assert!(r
            .iter()
            .all(|s| s.config.seed == 9 && s.config.optimizer.max_migrations == Some(3)));
    }

    #[test]
    fn flags_win_over_manifest_overrides() {
        let base = Overrides {
            seed: Some(1),
            max_ld: Some(5.0),
            ..Default::default()
        };
        let flags = Overrides {
            seed: Some(2),
            ..Default::default()
        };
        let o = flags.or(&base);
        assert_eq!((o.seed, o.max_ld), (Some(2), Some(5.0)));
    }

    #[test]
    fn budget_overrides_are_exclusive() {
        let mut cfg = ScenarioConfig::new(4, 2, 8, 50);
        cfg.optimizer.max_migrations = Some(4);
        Overrides {
            max_migr_cost: Some(2.5),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(
            (cfg.optimizer.max_migrations, cfg.optimizer.max_migr_cost),
            (None, Some(2.5))
        );
    }

    #[test]
    fn missing_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.toml",
            "schema_version = 1\n[scenario]\nnodes = 4\noperators = 2\ntotal_ticks = 9\n",
        );
        let err = load(&p).unwrap_err().to_string();
        assert!(err.contains("key_groups_per_operator"), "{err}");
    }

    #[test]
    fn wrong_version_and_unknown_optimizer_are_reported_together() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "m.toml",
            &format!(
                "schema_version = 2\ncompare = [\"milp\", \"simplex\"]\n[scenarios.x]\n{SMALL}"
            ),
        );
        match load(&p) {
            Err(CliError::Invalid(ps)) => {
                let keys: Vec<&str> = ps.iter().map(|p| p.key.as_str()).collect();
                assert_eq!(keys, ["schema_version", "compare[1]"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scenario_problems_carry_the_scenario_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.toml",
            &format!("schema_version = 1\n[scenario]\n{SMALL}"),
        );
        let man = load(&p).unwrap();
        let flags = Overrides {
            max_ld: Some(-1.0),
            ..Default::default()
        };
        let keys: Vec<String> = man.problems(&flags).into_iter().map(|p| p.key).collect();
        assert_eq!(keys, ["s.optimizer.max_ld"]);
    }
}
