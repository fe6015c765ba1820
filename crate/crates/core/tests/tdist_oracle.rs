use incapprox::estimator::{t_score, t_upper_tail};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

#[test]
fn quantiles_match_statrs() {
    for dof in [1.0, 1.5, 2.0, 3.0, 5.0, 7.5, 10.0, 25.0, 60.0, 120.0, 1000.0] {
        let oracle = StudentsT::new(0.0, 1.0, dof).unwrap();
        for p in [0.55, 0.75, 0.9, 0.95, 0.975, 0.99, 0.995, 0.999] {
            let got = t_score(dof, p).unwrap();
            let want = oracle.inverse_cdf(p);
            assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "f={dof} p={p}: {got} vs {want}");
        }
    }
}

#[test]
fn large_dof_approaches_normal() {
    let normal = Normal::standard();
    for p in [0.8, 0.95, 0.975, 0.995] {
        let got = t_score(1e7, p).unwrap();
        assert!((got - normal.inverse_cdf(p)).abs() < 1e-5, "p={p}");
    }
}

#[test]
fn upper_tail_matches_statrs() {
    for dof in [1.0, 4.0, 30.0] {
        let oracle = StudentsT::new(0.0, 1.0, dof).unwrap();
        for t in [0.0, 0.3, 1.0, 2.5, 8.0] {
            let want = 1.0 - oracle.cdf(t);
            assert!((t_upper_tail(t, dof) - want).abs() < 1e-9, "f={dof} t={t}");
        }
    }
}

#[test]
fn textbook_table() {
    let table = [
        (1.0, 0.95, 6.3138),
        (2.0, 0.975, 4.3027),
        (5.0, 0.99, 3.3649),
        (20.0, 0.95, 1.7247),
        (40.0, 0.995, 2.7045),
    ];
    for (f, p, want) in table {
        assert!((t_score(f, p).unwrap() - want).abs() < 1e-4, "f={f} p={p}");
    }
}
