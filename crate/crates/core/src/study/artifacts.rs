use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{plot, ReferenceOptimum, ReplicaReport, StudyError, StudyReport, STUDY_SCHEMA_VERSION};
use crate::gp::Dataset;

/// Files written by one emitter, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactSet {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl ArtifactSet {
    fn new(dir: PathBuf) -> Result<Self, StudyError> {
        fs::create_dir_all(&dir).map_err(|e| StudyError::io(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), StudyError> {
        let path = self.path(name);
        write_csv(&path, header, rows)?;
        self.files.push(path);
        Ok(())
    }

    fn svg(&mut self, name: &str, draw: impl FnOnce(&Path) -> Result<(), String>) -> Result<(), StudyError> {
        let path = self.path(name);
        draw(&path).map_err(|e| StudyError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    /// Writes `manifest.json` with SHA-256 digests of the files so far.
    fn manifest(&mut self, kind: &str, body: impl Serialize) -> Result<(), StudyError> {
        let mut digests = serde_json::Map::new();
        for f in &self.files {
            let bytes = fs::read(f).map_err(|e| StudyError::io(f, e))?;
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            digests.insert(name, hex.into());
        }
        let doc = serde_json::json!({
            "schema_version": STUDY_SCHEMA_VERSION,
            "generator": format!("mfbo {}", env!("CARGO_PKG_VERSION")),
            "kind": kind,
            "report": body,
            "files": digests,
        });
        let path = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&doc).map_err(|e| StudyError::io(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| StudyError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn theta_header<'a>(lead: &[&'a str]) -> Vec<&'a str> {
    let mut h = lead.to_vec();
    h.extend(["theta_1", "theta_2", "theta_3", "theta_4", "theta_5", "theta_6"]);
    h
}

/// Header plus rows, comma separated, `\n` terminated.
pub fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), StudyError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| StudyError::io(path, e))?;
    w.write_record(header).map_err(|e| StudyError::io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| StudyError::io(path, e))?;
    }
    w.flush().map_err(|e| StudyError::io(path, e))
}

/// Writes one benchmark study into `<out>/<study id>/`.
pub fn emit_artifacts(report: &StudyReport, out: &Path) -> Result<ArtifactSet, StudyError> {
    let mut set = ArtifactSet::new(out.join(report.id()))?;

    let mut rows = Vec::new();
    for run in &report.runs {
        for (n, (b, r)) in run.trace.best_so_far.iter().zip(&run.trace.regret).enumerate() {
            rows.push(vec![n.to_string(), run.method.label().into(), run.trial.to_string(), num(*b), num(*r)]);
        }
    }
    set.csv("regret.csv", &["iteration", "method", "trial", "best_cost", "regret"], rows)?;

    let mut rows = Vec::new();
    for a in &report.aggregates {
        for n in 0..a.mean.len() {
            rows.push(vec![
                n.to_string(),
                a.method.label().into(),
                num(a.mean[n]),
                num(a.median[n]),
                num(a.min[n]),
                num(a.max[n]),
            ]);
        }
    }
    set.csv("aggregate.csv", &["iteration", "method", "mean", "median", "min", "max"], rows)?;

    let mut rows = Vec::new();
    for run in &report.runs {
        for q in &run.queries {
            let mut row = vec![
                run.method.label().into(),
                run.trial.to_string(),
                q.iteration.to_string(),
                serde_json::to_value(q.acquisition).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                num(q.cost),
                q.dnf.to_string(),
            ];
            row.extend(q.x.iter().map(|&v| num(v)));
            rows.push(row);
        }
    }
    set.csv("queries.csv", &theta_header(&["method", "trial", "iteration", "acquisition", "cost", "dnf"]), rows)?;

    let rows = report
        .lows
        .iter()
        .map(|l| {
            vec![
                "best_from_simulation".into(),
                l.trial.to_string(),
                num(l.best_simulated),
                num(l.incumbent_true_cost),
            ]
        })
        .collect();
    set.csv("scatter.csv", &["point", "trial", "simulated_cost", "true_cost"], rows)?;

    set.svg("regret.svg", |p| plot::regret_curves(report, p))?;
    set.manifest("benchmark", report_manifest(report))?;
    Ok(set)
}

#[derive(Serialize)]
struct StudyManifest<'a> {
    study: &'a super::StudyConfig,
    seeds: &'a [u64],
    reference_optimum: f64,
    reference_provenance: &'a str,
    reference_evaluations: usize,
    baselines: &'a super::Baselines,
    low_data: &'a [super::TrialLow],
    clamped: bool,
}

fn report_manifest(r: &StudyReport) -> StudyManifest<'_> {
    StudyManifest {
        study: &r.config,
        seeds: &r.config.seeds,
        reference_optimum: r.reference_optimum,
        reference_provenance: &r.reference_provenance,
        reference_evaluations: r.reference_evaluations,
        baselines: &r.baselines,
        low_data: &r.lows,
        clamped: r.clamped,
    }
}

/// Writes the replica campaign into `<out>/replica/`.
pub fn emit_replica_artifacts(report: &ReplicaReport, out: &Path) -> Result<ArtifactSet, StudyError> {
    let mut set = ArtifactSet::new(out.join("replica"))?;
    let rows = report
        .queries
        .iter()
        .map(|q| {
            let mut row = vec![
                q.iteration.to_string(),
                serde_json::to_value(q.acquisition).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                num(q.true_cost),
                num(q.simulated_cost),
                q.dnf.to_string(),
                num(q.best_cost),
            ];
            row.extend(q.x.iter().map(|&v| num(v)));
            row
        })
        .collect();
    set.csv(
        "queries.csv",
        &theta_header(&["iteration", "acquisition", "true_cost", "simulated_cost", "dnf", "best_cost"]),
        rows,
    )?;

    let mut rows: Vec<Vec<String>> = report
        .queries
        .iter()
        .map(|q| vec![format!("query_{}", q.iteration), num(q.simulated_cost), num(q.true_cost)])
        .collect();
    for (name, b) in [
        ("manual", &report.manual),
        ("best_from_simulation", &report.best_from_simulation),
        ("best_from_experiment", &report.best_from_experiment),
    ] {
        rows.push(vec![name.into(), num(b.simulated_cost), num(b.true_cost)]);
    }
    set.csv("scatter.csv", &["point", "simulated_cost", "true_cost"], rows)?;

    set.svg("costs.svg", |p| plot::replica_costs(report, p))?;
    set.svg("scatter.svg", |p| plot::replica_scatter(report, p))?;
    set.manifest("replica", report)?;
    Ok(set)
}

#[derive(Serialize)]
struct OracleManifest<'a> {
    value: f64,
    x: &'a [f64],
    provenance: &'a str,
    evaluations: usize,
}

/// Writes the oracle audit log and summary into `out` under `name`.
pub fn emit_oracle_artifacts(reference: &ReferenceOptimum, out: &Path, name: &str) -> Result<ArtifactSet, StudyError> {
    let mut set = ArtifactSet::new(out.join(name))?;
    let rows = reference
        .audit
        .iter()
        .map(|a| {
            let mut row = vec![
                a.campaign.map_or_else(|| "sweep".to_string(), |c| format!("campaign_{c}")),
                a.index.to_string(),
                num(a.cost),
            ];
            row.extend(a.x.iter().map(|&v| num(v)));
            row
        })
        .collect();
    set.csv("audit.csv", &theta_header(&["source", "index", "cost"]), rows)?;
    set.manifest(
        "reference_optimum",
        OracleManifest {
            value: reference.value,
            x: &reference.x,
            provenance: &reference.provenance,
            evaluations: reference.evaluations(),
        },
    )?;
    Ok(set)
}

/// One low-fidelity dataset as CSV (`index, cost, theta_*`).
pub fn emit_low_data(data: &Dataset, path: &Path) -> Result<(), StudyError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| StudyError::io(parent, e))?;
    }
    let rows = data
        .inputs()
        .iter()
        .zip(data.targets())
        .enumerate()
        .map(|(i, (x, &y))| {
            let mut row = vec![i.to_string(), num(y)];
            row.extend(x.iter().map(|&v| num(v)));
            row
        })
        .collect();
    write_csv(path, &theta_header(&["index", "cost"]), rows)
}

/// Early and final regret per study and method:
/// `study, method, trials, query, mean_early, median_early, mean_final, median_final`.
pub fn emit_summary(reports: &[StudyReport], early: usize, path: &Path) -> Result<(), StudyError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| StudyError::io(parent, e))?;
    }
    let mut rows = Vec::new();
    for r in reports {
        for a in &r.aggregates {
            let last = a.mean.len() - 1;
            let n = early.min(last);
            rows.push(vec![
                r.id().to_string(),
                a.method.label().into(),
                r.config.seeds.len().to_string(),
                n.to_string(),
                num(a.mean[n]),
                num(a.median[n]),
                num(a.mean[last]),
                num(a.median[last]),
            ]);
        }
    }
    write_csv(
        path,
        &["study", "method", "trials", "query", "mean_early", "median_early", "mean_final", "median_final"],
        rows,
    )
}
