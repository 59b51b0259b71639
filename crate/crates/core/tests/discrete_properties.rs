use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use pinning_core::discrete::{construct_supersolution, path_stats, verify_discrete, SearchBudget, SupersolutionPath};
use pinning_core::{DistributionSpec, Exec, SeededField};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constructed_paths_are_supersolutions(
        p in 0.05f64..0.95,
        hi in 0i64..4,
        lo in -4i64..0,
        seed in any::<u64>(),
        force in -2i64..=2,
        w in 1i64..400,
        n0 in -10i64..10,
    ) {
        let spec = DistributionSpec::two_point(hi, pinning_core::ExtInt::Finite(lo), p).unwrap();
        let field = SeededField::new(seed, spec);
        let path = construct_supersolution(&field, n0, force, w, SearchBudget::default(), Exec::Sequential).unwrap();
        prop_assert!(verify_discrete(&path, &field, force).is_empty());
        prop_assert!(path.v(0) >= n0);
        for i in 1..=w {
            prop_assert_eq!(path.v(i), path.v_bar(i) - path.argmax_m(i));
            prop_assert!(path.argmax_m(i) >= 0);
        }
    }

    #[test]
    fn execution_mode_does_not_matter(seed in any::<u64>(), w in 1i64..300) {
        let field = SeededField::new(seed, DistributionSpec::bernoulli_pm1(0.5).unwrap());
        let a = construct_supersolution(&field, 0, 0, w, SearchBudget::default(), Exec::Sequential).unwrap();
        let b = construct_supersolution(&field, 0, 0, w, SearchBudget::default(), Exec::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn columnar_round_trip(seed in any::<u64>(), w in 1i64..60, force in -1i64..=1) {
        let field = SeededField::new(seed, DistributionSpec::bernoulli_pm1(0.4).unwrap());
        let path = construct_supersolution(&field, 3, force, w, SearchBudget::default(), Exec::Sequential).unwrap();
        prop_assert_eq!(SupersolutionPath::from_columnar(&path.to_columnar()).unwrap(), path);
    }
}

/// Second differences of the increments, shifted by `F`, are i.i.d. copies of
/// `M = max_k (Z_k - k)`, whose law is `P(M <= t) = prod_{s >= t} P(Z <= s)`.
#[test]
fn increment_law_passes_chi_square() {
    let (p, force) = (0.45, 0);
    let spec = DistributionSpec::two_point(2, pinning_core::ExtInt::Finite(-1), p).unwrap();
    let cdf = |t: i64| match t {
        t if t < -1 => 0.0,
        t if t < 2 => 1.0 - p,
        _ => 1.0,
    };
    let law = |t: i64| (t..2).map(cdf).product::<f64>();
    let support: Vec<i64> = (-1..=2).collect();
    let pmf: Vec<f64> = support.iter().map(|&t| law(t) - law(t - 1)).collect();
    assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let field = SeededField::new(2024, spec);
    let w = 20_000;
    let path = construct_supersolution(&field, 0, force, w, SearchBudget::default(), Exec::Parallel).unwrap();
    let mut counts = vec![0u64; support.len()];
    for n in 1..w {
        let x = path.increment(n + 1) - path.increment(n) + force;
        counts[(x + 1) as usize] += 1;
    }
    let total = counts.iter().sum::<u64>() as f64;
    let stat: f64 = counts
        .iter()
        .zip(&pmf)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&c, &q)| (c as f64 - total * q).powi(2) / (total * q))
        .sum();
    let dof = pmf.iter().filter(|&&q| q > 0.0).count() as f64 - 1.0;
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    assert!(p_value > 1e-3, "chi2 = {stat}, p = {p_value}, counts {counts:?}, pmf {pmf:?}");
}

#[test]
fn raising_the_start_raises_the_pass_rate() {
    let spec = DistributionSpec::bernoulli_pm1(0.5).unwrap();
    let rate = |n0: i64| {
        (0..60u64)
            .filter(|&s| {
                let field = SeededField::new(900 + s, spec.clone());
                let path = construct_supersolution(&field, n0, 0, 2000, SearchBudget::default(), Exec::Parallel).unwrap();
                path_stats(&path).nonnegative
            })
            .count()
    };
    let rates: Vec<usize> = [0, 5, 20, 100, 400].iter().map(|&n| rate(n)).collect();
    assert!(rates.windows(2).all(|w| w[1] + 6 >= w[0]), "{rates:?}");
    assert!(rates[4] >= rates[0]);
}
