use pglqr::bench::Family;
use pglqr::experiment::{self, BenchmarkSpec, CsvRow};
use pglqr::optimizer::EstimatorKind;

#[test]
fn aircraft_robust_beats_two_point_at_every_threshold() {
    let spec = BenchmarkSpec {
        estimator: EstimatorKind::Robust,
        max_iters: 5000,
        ..BenchmarkSpec::new(Family::Aircraft)
    };
    let cmp = experiment::compare_estimators(&spec, &[EstimatorKind::Robust, EstimatorKind::TwoPoint], 1e-6, None).unwrap();
    let (robust, two_point) = (&cmp.runs[0].records, &cmp.runs[1].records);
    for threshold in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        let hit = |rows: &[pglqr::optimizer::IterationRecord]| rows.iter().position(|r| r.f_gap <= threshold);
        let (r, t) = (hit(robust).unwrap(), hit(two_point).unwrap());
        assert!(r < t, "threshold {threshold}: robust {r}, two-point {t}");
    }
}

#[test]
fn artifacts_are_reproducible_and_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let spec = BenchmarkSpec {
        estimator: EstimatorKind::TwoPoint,
        seed: 11,
        max_iters: 300,
        ..BenchmarkSpec::mass_spring(2)
    };
    let a = experiment::run_experiment(&spec, Some(&dir.path().join("a"))).unwrap();
    let b = experiment::run_experiment(&spec, Some(&dir.path().join("b"))).unwrap();
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    assert_eq!(read(a.csv_path.as_ref().unwrap()), read(b.csv_path.as_ref().unwrap()));
    let rows = experiment::read_iterations_csv(a.csv_path.as_ref().unwrap()).unwrap();
    let want: Vec<CsvRow> = a.records.iter().map(CsvRow::from).collect();
    assert_eq!(rows, want);
    assert_eq!(rows.len(), 300);
    let summary = experiment::read_summary(a.json_path.as_ref().unwrap()).unwrap();
    assert_eq!(summary, a.summary);
    assert_eq!(summary.config_hash, spec.content_hash());
}

#[test]
fn scalar_and_random_runs_converge() {
    let rec = experiment::run_experiment(&BenchmarkSpec::new(Family::Scalar), None).unwrap();
    assert!(rec.summary.final_gain_err <= 1e-8);
    let spec = BenchmarkSpec {
        n: Some(4),
        m: Some(2),
        seed: 3,
        ..BenchmarkSpec::new(Family::RandomHurwitz)
    };
    let rec = experiment::run_experiment(&spec, None).unwrap();
    assert!(rec.summary.final_gain_err <= 1e-8);
    assert!(rec.summary.kstar_residual <= 1e-10);
}
