use std::fs;
use std::sync::Arc;

use mfbo::bayesopt::{FnObjective, LowStageConfig, SearchDomain, SurrogateKind};
use mfbo::study::{
    compute_reference_optimum, emit_artifacts, emit_oracle_artifacts, emit_replica_artifacts, load_or_generate_low,
    reference_for_plant, run_benchmark_study, run_experiment_replica, ArtifactCache, LapObjective, OracleConfig,
    ReferenceOptimum, SuiteConfig,
};
use mfbo::vehicle::perturb_plant;

fn quick_search(iterations: usize) -> LowStageConfig {
    LowStageConfig {
        initial: 3,
        ipv: 2,
        ei: iterations,
        quadrature: 64,
        domain: SearchDomain {
            candidates: 512,
            polish: 2,
            ..Default::default()
        },
        restarts: 2,
        ..Default::default()
    }
}

fn tiny_suite() -> SuiteConfig {
    let mut s = SuiteConfig {
        trials: 2,
        low: quick_search(3),
        ..Default::default()
    };
    s.high.budget = 4;
    s.high.domain = s.low.domain.clone();
    s.high.restarts = 2;
    s.oracle = OracleConfig {
        sweep_points: 24,
        campaigns: 1,
        iterations: 3,
        random_initial: 2,
        seed: 9,
        search: quick_search(0),
    };
    s
}

fn suite_reference(s: &SuiteConfig, cache: &ArtifactCache) -> (ReferenceOptimum, bool) {
    let v = &s.vehicle;
    let traj = Arc::new(v.reference().unwrap());
    reference_for_plant(v.plant, &v.track, &v.speed, &v.sim, traj, &s.oracle, cache).unwrap()
}

#[test]
fn oracle_finds_the_sphere_minimum() {
    let centre = [0.3, 0.7, 0.45, 0.6, 0.2, 0.55];
    let f = FnObjective::new(6, move |x: &[f64]| x.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum());
    let cfg = OracleConfig::default();
    let r = compute_reference_optimum(&f, &cfg).unwrap();
    assert!(r.value <= 1e-3, "{}", r.value);
    assert_eq!(r.value, r.audit_min());
    assert_eq!(r.evaluations(), cfg.sweep_points + cfg.campaigns * (1 + cfg.random_initial + cfg.iterations));
    assert!(r.audit.iter().any(|a| a.x == r.x && a.cost == r.value));
}

#[test]
fn oracle_on_a_constant_returns_the_constant() {
    let f = FnObjective::new(6, |_: &[f64]| 0.731);
    let cfg = OracleConfig {
        sweep_points: 50,
        campaigns: 1,
        iterations: 5,
        search: quick_search(0),
        ..Default::default()
    };
    assert_eq!(compute_reference_optimum(&f, &cfg).unwrap().value, 0.731);
}

#[test]
fn reference_is_cached_and_audited() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ArtifactCache::new(Some(dir.path().to_path_buf()));
    let s = tiny_suite();
    let (first, hit) = suite_reference(&s, &cache);
    assert!(!hit);
    let (second, hit) = suite_reference(&s, &cache);
    assert!(hit);
    assert_eq!(first, second);
    assert_eq!(first.value, first.audit_min());

    let out = tempfile::tempdir().unwrap();
    let set = emit_oracle_artifacts(&first, out.path(), "reference").unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(set.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["report"]["value"].as_f64().unwrap(), first.audit_min());
    let rows = fs::read_to_string(set.dir.join("audit.csv")).unwrap().lines().count();
    assert_eq!(rows, first.evaluations() + 1);
}

#[test]
fn cached_low_data_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ArtifactCache::new(Some(dir.path().to_path_buf()));
    let s = tiny_suite();
    let v = &s.vehicle;
    let plant = perturb_plant(&v.plant, &s.studies[0].perturbation).unwrap();
    let obj = LapObjective::new(plant, Arc::new(v.reference().unwrap()), v.sim).unwrap();
    let (a, hit_a) = load_or_generate_low(&obj, &v.track, &v.speed, &s.low, 5, &cache).unwrap();
    let (b, hit_b) = load_or_generate_low(&obj, &v.track, &v.speed, &s.low, 5, &cache).unwrap();
    let (c, _) = load_or_generate_low(&obj, &v.track, &v.speed, &s.low, 5, &ArtifactCache::disabled()).unwrap();
    assert!(!hit_a && hit_b);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.is_frozen());
    assert_eq!(a.len(), s.low.total());
}

#[test]
fn benchmark_study_outputs() {
    let s = tiny_suite();
    let cache = ArtifactCache::disabled();
    let (reference, _) = suite_reference(&s, &cache);
    let cfg = &s.benchmark_studies(40)[0];
    let report = run_benchmark_study(cfg, &reference, &cache).unwrap();
    let again = run_benchmark_study(cfg, &reference, &cache).unwrap();
    assert_eq!(report, again);

    let (methods, trials, budget) = (cfg.surrogates.len(), cfg.seeds.len(), cfg.high.budget);
    assert_eq!(report.runs.len(), methods * trials);
    for run in &report.runs {
        assert_eq!(run.trace.len(), budget + 1);
        assert_eq!(run.trace.best_so_far[0], s.high.dnf_cost);
        assert!(run.trace.regret.iter().all(|&r| r >= 0.0));
        assert!(run.trace.best_so_far.windows(2).all(|w| w[1] <= w[0]));
    }

    let out = tempfile::tempdir().unwrap();
    let set = emit_artifacts(&report, out.path()).unwrap();
    let regret_rows = fs::read_to_string(set.dir.join("regret.csv")).unwrap().lines().count() - 1;
    assert_eq!(regret_rows, methods * trials * (budget + 1));
    let query_rows = fs::read_to_string(set.dir.join("queries.csv")).unwrap().lines().count() - 1;
    assert_eq!(query_rows, methods * trials * budget);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(set.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["report"]["reference_optimum"].as_f64().unwrap(), reference.audit_min());
    for f in &set.files[..set.files.len() - 1] {
        let name = f.file_name().unwrap().to_str().unwrap();
        assert!(manifest["files"][name].is_string(), "{name} missing from manifest");
    }
}

#[test]
fn single_fidelity_and_ar1_differ() {
    let s = tiny_suite();
    let cache = ArtifactCache::disabled();
    let (reference, _) = suite_reference(&s, &cache);
    let report = run_benchmark_study(&s.benchmark_studies(40)[0], &reference, &cache).unwrap();
    let sf: Vec<_> = report.runs_for(SurrogateKind::SingleFidelity).map(|r| &r.queries).collect();
    let ar1: Vec<_> = report.runs_for(SurrogateKind::Ar1).map(|r| &r.queries).collect();
    assert_ne!(sf, ar1);
}

#[test]
fn sweep_studies_share_seeds() {
    let s = SuiteConfig::default();
    let studies = s.sweep_studies(17);
    assert_eq!(studies.len(), 3);
    for st in &studies {
        assert_eq!(st.seeds, studies[0].seeds);
        assert_eq!(st.surrogates, [SurrogateKind::Ar1, SurrogateKind::SingleFidelity]);
    }
    let scales: Vec<f64> = studies.iter().map(|st| st.perturbation.peak_force_scale.unwrap()).collect();
    assert_eq!(scales, [1.01, 1.05, 1.10]);
}

#[test]
fn replica_outputs() {
    let mut s = tiny_suite();
    s.replica.budget = 6;
    let cache = ArtifactCache::disabled();
    let report = run_experiment_replica(&s, 3, &cache).unwrap();
    assert_eq!(report.queries.len(), 6);
    assert_eq!(report.frozen_low_len[0], report.frozen_low_len[1]);
    assert_eq!(report.high.dnf_cost, 1.0);
    for q in &report.queries {
        if q.dnf {
            assert_eq!(q.true_cost, 1.0);
        }
    }
    let best = report.queries.iter().map(|q| q.true_cost).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_from_experiment.true_cost, best);
    assert_eq!(report.queries.last().unwrap().best_cost, best);

    let out = tempfile::tempdir().unwrap();
    let set = emit_replica_artifacts(&report, out.path()).unwrap();
    let rows = fs::read_to_string(set.dir.join("queries.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 6);
}

#[test]
fn default_config_round_trips_through_toml() {
    let s = SuiteConfig::default();
    let text = s.to_toml().unwrap();
    assert_eq!(SuiteConfig::from_toml(&text).unwrap(), s);
    let bad = text.replace("schema_version = 1", "schema_version = 99");
    assert!(SuiteConfig::from_toml(&bad).unwrap_err().is_config());
}
