use ndarray::Array1;
use proptest::prelude::*;
use sinkbridge::eot::{hilbert_metric, scaling, StoppingRule};
use sinkbridge::harness::{Experiment, ExperimentConfig, ResultRow, ResultTable, RowFlag};
use sinkbridge::neural::MlpModel;
use sinkbridge::{DriftField, EotProblem, PointCloud, SinkhornSolver};

fn cloud(rows: usize, dim: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(-1.5f64..1.5, rows * dim)
        .prop_map(move |v| PointCloud::new(ndarray::Array2::from_shape_vec((rows, dim), v).unwrap()).unwrap())
}

fn problem() -> impl Strategy<Value = EotProblem> {
    (2usize..12, 2usize..12, 1usize..4, 0.2f64..2.0).prop_flat_map(|(m, n, d, eps)| {
        (cloud(m, d), cloud(n, d)).prop_map(move |(x, y)| EotProblem::new(x, y, eps).unwrap())
    })
}

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coupling_is_shift_invariant(p in problem(), a in -20.0f64..20.0, k in 0usize..30) {
        let solver = SinkhornSolver::new(&p);
        let pot = solver.run(StoppingRule::Iterations(k)).unwrap().potentials;
        let base = solver.coupling_density(&pot);
        let moved = solver.coupling_density(&pot.shifted(a));
        for (x, y) in base.iter().zip(moved.iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn drift_ignores_constant_shift_of_g(p in problem(), c in -50.0f64..50.0, t in 0.0f64..0.95) {
        let solver = SinkhornSolver::new(&p);
        let pot = solver.run(StoppingRule::Iterations(20)).unwrap().potentials;
        let a = DriftField::new(p.target().clone(), pot.g.clone(), p.epsilon()).unwrap();
        let b = DriftField::new(p.target().clone(), pot.g.iter().map(|g| g + c).collect(), p.epsilon()).unwrap();
        for z in p.source().points().rows() {
            let z = z.to_vec();
            for (u, v) in a.drift_eval(&z, t).unwrap().iter().zip(b.drift_eval(&z, t).unwrap()) {
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn log_domain_matches_scaling_form(p in problem(), k in 1usize..40) {
        let solver = SinkhornSolver::new(&p);
        let pot = solver.run(StoppingRule::Iterations(k)).unwrap().potentials;
        let kmat = scaling::gibbs_kernel(solver.kernel());
        let mut v = Array1::ones(p.n());
        for _ in 0..k {
            v = scaling::iterate(&kmat, &v).1;
        }
        for (g, vj) in pot.g.iter().zip(v.iter()) {
            prop_assert!((g - p.epsilon() * vj.ln()).abs() <= 1e-9 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn dual_objective_never_decreases(p in problem()) {
        let run = SinkhornSolver::new(&p).run(StoppingRule::Iterations(30)).unwrap();
        for w in run.trace.windows(2).skip(1) {
            prop_assert!(w[1].dual_objective >= w[0].dual_objective - 1e-12 * (1.0 + w[0].dual_objective.abs()));
        }
    }

    #[test]
    fn hilbert_triangle_inequality((u, v, w) in (2usize..30).prop_flat_map(|n| (positive(n), positive(n), positive(n)))) {
        let d = |a: &[f64], b: &[f64]| hilbert_metric(a, b).unwrap();
        prop_assert!(d(&u, &w) <= d(&u, &v) + d(&v, &w) + 1e-12);
        prop_assert!(d(&u, &u) == 0.0);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), hidden in prop::collection::vec(1usize..9, 1..4)) {
        let model = MlpModel::for_drift(2, &hidden, seed).unwrap();
        let back = MlpModel::from_bytes(&model.to_bytes()).unwrap().unwrap();
        prop_assert_eq!(back.params(), model.params());
        prop_assert_eq!(back.layer_dims(), model.layer_dims());
    }

    #[test]
    fn result_table_csv_round_trip(values in prop::collection::vec((1usize..5000, -1e6f64..1e6, 0.0f64..10.0), 1..20)) {
        let mut table = ResultTable::new(Experiment::MseSample, "0123456789abcdef".into(), &["m", "t"]);
        for (i, (m, v, se)) in values.iter().enumerate() {
            table.push(ResultRow {
                params: vec![*m as f64, i as f64 / 7.0],
                value: *v,
                std_error: *se,
                trials: 3,
                flag: if i % 3 == 0 { RowFlag::Unconverged } else { RowFlag::Ok },
                seed: 9,
            });
        }
        let back = ResultTable::read_csv(table.to_csv_string().as_bytes()).unwrap();
        prop_assert_eq!(back, table);
    }
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg, "{}", path.display());
        assert_eq!(path.file_stem().unwrap().to_str(), Some(cfg.experiment.name()));
        count += 1;
    }
    assert_eq!(count, Experiment::ALL.len());
}
