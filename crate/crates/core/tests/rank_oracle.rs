mod oracles;

use diswot_core::data::{AccuracyTable, ScoreRow};
use diswot_core::rank::{
    evaluate_proxy, kendall_tau, kendall_tau_with, pearson, percent, render_report_csv, render_report_table,
    spearman, CorrelationReport, EvalOptions, KendallVariant, PairedSeries, Stat,
};
use diswot_core::rng::stream_rng;
use diswot_core::Error;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn permutations_match_enumeration_exactly() {
    for n in 2..=6 {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for p in oracles::permutations(n) {
            let y: Vec<f64> = p.iter().map(|&i| i as f64).collect();
            let s = PairedSeries::from_values(y.clone(), x.clone()).unwrap();
            let (num, den) = oracles::kendall_pairs(&x, &y);
            assert_eq!(kendall_tau(&s).value, num as f64 / den as f64, "{p:?}");
            assert_eq!(kendall_tau_with(&s, KendallVariant::TauB).value, num as f64 / den as f64);
            if n >= 3 {
                let (num, den) = oracles::spearman_closed(&x, &y);
                let want = num as f64 / den as f64;
                assert_eq!(spearman(&s).unwrap().value, want, "{p:?}");
                assert_eq!(pearson(&s).unwrap(), want, "{p:?}");
            }
        }
    }
}

fn ternary(mut k: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let d = k % 3;
            k /= 3;
            d as f64
        })
        .collect()
}

#[test]
fn tied_series_match_brute_force() {
    for n in 3..=5 {
        let total = 3usize.pow(n as u32);
        for a in 0..total {
            for b in 0..total {
                let (x, y) = (ternary(a, n), ternary(b, n));
                let s = PairedSeries::from_values(y.clone(), x.clone()).unwrap();
                let constant = |v: &[f64]| v.iter().all(|&e| e == v[0]);
                let ta = kendall_tau(&s);
                let sp = spearman(&s).unwrap();
                if constant(&x) || constant(&y) {
                    assert!(ta.degenerate && sp.degenerate);
                    assert_eq!((ta.value, sp.value), (0.0, 0.0));
                    assert!(matches!(pearson(&s), Err(Error::InvalidArgument(_))));
                    continue;
                }
                let (num, den) = oracles::kendall_pairs(&x, &y);
                assert_eq!(ta.value, num as f64 / den as f64);
                let tb = kendall_tau_with(&s, KendallVariant::TauB).value;
                assert!((tb - oracles::kendall_b(&x, &y)).abs() < 1e-12);
                assert!((sp.value - oracles::spearman_ranked(&x, &y)).abs() < 1e-12);
                assert!((pearson(&s).unwrap() - oracles::pearson(&x, &y)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn formatting_fixture() {
    assert_eq!(percent(0.7398), "73.98");
    assert_eq!(percent(-0.00001), "0.00");
    assert_eq!(percent(1.0), "100.00");
    assert_eq!(percent(-0.5), "-50.00");
    let st = Stat::from_values(&[0.90, 0.92]);
    assert_eq!(st.percent(), "91.00±1.00");
    let r = CorrelationReport {
        proxy_name: "diswot".into(),
        kendall_tau: Stat { mean: 0.7398, std: 0.0012 },
        spearman: Stat { mean: 0.9138, std: 0.0 },
        pearson: Stat { mean: 0.8483, std: 0.02 },
        n_seeds: 5,
        n_archs: 64,
        degenerate: 0,
    };
    assert_eq!(
        render_report_csv(std::slice::from_ref(&r)),
        "proxy,metric,mean,std,n_seeds,n_archs\n\
         diswot,kendall_tau,73.98,0.12,5,64\n\
         diswot,spearman,91.38,0.00,5,64\n\
         diswot,pearson,84.83,2.00,5,64\n"
    );
    let table = render_report_table(&[r]);
    assert!(table.contains("73.98±0.12"));
    assert!(table.contains("91.38±0.00"));
    assert!(table.contains("84.83±2.00"));
}

fn synthetic(n_archs: usize, seeds: u64, noise: f64) -> (AccuracyTable, Vec<ScoreRow>) {
    let mut rng = stream_rng(77, 0);
    let acc: Vec<(String, f64)> = (0..n_archs)
        .map(|i| (format!("a{i}"), rng.random_range(0.6..0.8)))
        .collect();
    let normal = Normal::new(0.0, noise).unwrap();
    let mut rows = Vec::new();
    for seed in 0..seeds {
        for (id, a) in &acc {
            rows.push(ScoreRow {
                arch_id: id.clone(),
                proxy: "p".into(),
                value: a + normal.sample(&mut rng),
                higher_is_better: true,
                seed,
            });
        }
    }
    (AccuracyTable::from_rows(acc).unwrap(), rows)
}

#[test]
fn report_matches_independent_computation() {
    // Noise chosen so Spearman lands near 0.9.
    let (acc, rows) = synthetic(64, 10, 0.025);
    let report = evaluate_proxy("p", &rows, &acc, &EvalOptions::default(), &mut stream_rng(0, 0)).unwrap();
    let mut sp = Vec::new();
    let mut kt = Vec::new();
    for seed in 0..10 {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| (acc.get(&r.arch_id).unwrap(), r.value))
            .unzip();
        sp.push(oracles::spearman_ranked(&x, &y));
        let (num, den) = oracles::kendall_pairs(&x, &y);
        kt.push(num as f64 / den as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&sp) - 0.9).abs() < 0.1, "fixture spearman {}", mean(&sp));
    assert!((report.spearman.mean - mean(&sp)).abs() < 0.05);
    assert!((report.kendall_tau.mean - mean(&kt)).abs() < 1e-12);
    assert_eq!((report.n_seeds, report.n_archs), (10, 64));
}

#[test]
fn subsampling_and_missing_archs() {
    let (acc, rows) = synthetic(30, 2, 0.01);
    let opts = EvalOptions {
        sample_size: Some(10),
        repetitions: Some(7),
        ..EvalOptions::default()
    };
    let a = evaluate_proxy("p", &rows, &acc, &opts, &mut stream_rng(1, 0)).unwrap();
    let b = evaluate_proxy("p", &rows, &acc, &opts, &mut stream_rng(1, 0)).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.n_seeds, a.n_archs), (7, 10));

    let partial = AccuracyTable::from_rows(acc.rows()[1..].to_vec()).unwrap();
    let err = evaluate_proxy("p", &rows, &partial, &EvalOptions::default(), &mut stream_rng(1, 0)).unwrap_err();
    assert!(matches!(err, Error::MissingArch(ref id) if id == "a0"));
}
