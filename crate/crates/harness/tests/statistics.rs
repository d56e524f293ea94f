use vattention::{BoundKind, GuaranteeParams};
use vattention_harness::{
    gen_workload, run_sweep, verify_guarantee, Dist, LshConfig, Method, SweepConfig, VerifyConfig,
    WorkloadSpec,
};

#[test]
fn random_sample_error_shrinks_with_density() {
    let spec = WorkloadSpec {
        dist: Dist::OutlierMix {
            outlier_frac: 0.02,
            outlier_gain: 3.0,
        },
        n: 2048,
        d: 32,
        m: 64,
        seed: 5,
    };
    let (cache, queries) = gen_workload(&spec).unwrap();
    let mut stats = vec![];
    for fb in [0.02, 0.05, 0.1, 0.2, 0.4] {
        let cfg = SweepConfig {
            methods: vec![Method::RandomSample],
            eps: vec![0.1],
            params: GuaranteeParams::default().with_fractions(0.0, 0.0, 0.0, fb),
            lsh: LshConfig::default(),
            seed: 17,
        };
        let errs: Vec<f64> = run_sweep(&cache, &queries, &cfg)
            .unwrap()
            .iter()
            .map(|r| r.rel_err_out)
            .collect();
        let k = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / k;
        let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (k - 1.0);
        stats.push((fb, mean, (var / k).sqrt()));
    }
    for w in stats.windows(2) {
        let ((f0, m0, s0), (f1, m1, s1)) = (w[0], w[1]);
        assert!(
            m1 <= m0 + 3.0 * (s0 * s0 + s1 * s1).sqrt(),
            "fb {f0} -> {f1}: {m0} -> {m1}"
        );
    }
    assert!(stats[4].1 < stats[0].1);
}

#[test]
fn hoeffding_fails_no_more_often_than_clt() {
    for dist in [
        Dist::GaussianKeys { cluster_count: 8 },
        Dist::OutlierMix {
            outlier_frac: 0.01,
            outlier_gain: 4.0,
        },
        Dist::ZipfScores { s: 1.0 },
    ] {
        let spec = WorkloadSpec {
            dist,
            n: 2048,
            d: 32,
            m: 256,
            seed: 9,
        };
        let (cache, queries) = gen_workload(&spec).unwrap();
        let rate = |bound| {
            let cfg = VerifyConfig {
                params: GuaranteeParams {
                    bound,
                    ..GuaranteeParams::new(0.1, 0.2)
                },
                eps_grid: vec![0.05, 0.1],
                trials: 1,
                seed: 3,
                oracle_stats: false,
            };
            let (_, report) = verify_guarantee(&cache, &queries, &cfg).unwrap();
            report
                .per_eps
                .iter()
                .map(|s| s.fail_rate)
                .collect::<Vec<_>>()
        };
        let (h, c) = (rate(BoundKind::Hoeffding), rate(BoundKind::Clt));
        for (h, c) in h.iter().zip(&c) {
            assert!(h <= c, "{dist}: hoeffding {h} clt {c}");
        }
    }
}

#[test]
fn verify_records_match_report() {
    let spec = WorkloadSpec {
        dist: Dist::GaussianKeys { cluster_count: 4 },
        n: 1024,
        d: 16,
        m: 16,
        seed: 2,
    };
    let (cache, queries) = gen_workload(&spec).unwrap();
    let cfg = VerifyConfig {
        params: GuaranteeParams::default(),
        eps_grid: vec![0.2, 0.05],
        trials: 4,
        seed: 1,
        oracle_stats: false,
    };
    let (rows, report) = verify_guarantee(&cache, &queries, &cfg).unwrap();
    assert_eq!(rows.len(), 2 * 16 * 4);
    for (chunk, s) in rows.chunks(64).zip(&report.per_eps) {
        assert!(chunk.iter().all(|r| r.eps == s.eps));
        let fails = chunk.iter().filter(|r| r.rel_err_den > s.eps).count() as f64 / 64.0;
        assert_eq!(fails, s.fail_rate);
        assert!((0.0..=1.0).contains(&s.fail_rate));
    }
    assert!(report.per_eps[0].eps < report.per_eps[1].eps);
    assert!(report.per_eps[0].mean_budget > report.per_eps[1].mean_budget);
}
