//! Distributional checks of the simulators.

use gpcopula::dnorm::{DNormHandle, GeneratorSpec, McConfig};
use gpcopula::pseudo::Provenance;
use gpcopula::simulate::{simulate, simulate_copula_scale, GpdSampleConfig, Margins};
use proptest::prelude::*;

fn binomial_z(count: usize, n: usize, p: f64) -> f64 {
    (count as f64 / n as f64 - p) / (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn standard_margins_joint_tail_matches_dual() {
    let n = 1_000_000;
    let spec = GeneratorSpec::logistic(2.0, 2).unwrap();
    let y = simulate(&GpdSampleConfig::new(spec.clone(), Margins::Standard, n, 5)).unwrap();
    let s = 0.02;
    // P(Y > -s 1) = E min(1, s min Z) ≈ s * ⫫1⫫_D = s (2 - sqrt 2)
    let joint = y.rows_iter().filter(|r| r.iter().all(|&v| v > -s)).count();
    let dual = 2.0 - 2f64.sqrt();
    assert!(binomial_z(joint, n, s * dual).abs() < 4.0, "z = {}", binomial_z(joint, n, s * dual));
    for j in 0..2 {
        let marg = y.rows_iter().filter(|r| r[j] > -s).count();
        assert!(binomial_z(marg, n, s).abs() < 4.0);
    }
}

#[test]
fn husler_reiss_tail_dependence() {
    let n = 1_000_000;
    let spec = GeneratorSpec::husler_reiss(vec![vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap();
    let handle = DNormHandle::new(spec.clone(), McConfig { sample_count: 400_000, rng_seed: 1 }).unwrap();
    let dual = handle.eval_dual(&[1.0, 1.0]).unwrap();
    let y = simulate(&GpdSampleConfig::new(spec, Margins::Standard, n, 6)).unwrap();
    let s = 0.01;
    let joint = y.rows_iter().filter(|r| r[0] > -s && r[1] > -s).count();
    let z = binomial_z(joint, n, s * dual);
    assert!(z.abs() < 4.5, "z = {z}, dual = {dual}");
}

#[test]
fn gumbel_and_negative_alpha_margins() {
    let n = 400_000;
    let spec = GeneratorSpec::constant_one(2).unwrap();
    let y = simulate(&GpdSampleConfig::new(spec.clone(), Margins::GeneralAlpha(vec![0.0, -2.0]), n, 8)).unwrap();
    // alpha = 0: P(Y > x) = exp(-x); alpha = -2: P(Y > x) = x^{-2} for x >= 1
    let g = y.rows_iter().filter(|r| r[0] > 3.0).count();
    assert!(binomial_z(g, n, (-3.0f64).exp()).abs() < 4.0);
    let p = y.rows_iter().filter(|r| r[1] > 4.0).count();
    assert!(binomial_z(p, n, 1.0 / 16.0).abs() < 4.0);
    assert!(y.rows_iter().all(|r| r[1] >= 1.0));
}

#[test]
fn independent_of_thread_count() {
    let cfg = GpdSampleConfig::new(GeneratorSpec::logistic(3.0, 3).unwrap(), Margins::SimplePareto, 50_000, 12);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| simulate(&cfg).unwrap());
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| simulate(&cfg).unwrap());
    assert_eq!(one, four);
}

#[test]
fn exact_gpc_exceedance_stability_on_subsets() {
    let n = 500_000;
    let spec = GeneratorSpec::constant_one(3).unwrap();
    let u = simulate_copula_scale(&GpdSampleConfig::new(spec, Margins::CopulaScale, n, 13)).unwrap();
    for cols in [vec![0usize], vec![0, 2], vec![0, 1, 2]] {
        let count = |h: f64| u.data().rows_iter().filter(|r| cols.iter().all(|&j| r[j] >= 1.0 - h)).count();
        let base = count(0.1);
        let half = count(0.05);
        let se = (0.25 / base as f64).sqrt();
        assert!((half as f64 / base as f64 - 0.5).abs() < 4.0 * se);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn copula_scale_in_unit_interval(d in 1usize..5, n in 2usize..300, seed in any::<u64>(), fam in 0usize..3) {
        let spec = match fam {
            0 => GeneratorSpec::constant_one(d).unwrap(),
            1 => GeneratorSpec::permuted_spike(d).unwrap(),
            _ => GeneratorSpec::logistic(2.5, d).unwrap(),
        };
        let p = simulate_copula_scale(&GpdSampleConfig::new(spec, Margins::CopulaScale, n, seed)).unwrap();
        prop_assert!(p.data().as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert_eq!(p.exact_gpc(), fam < 2);
        if fam == 2 {
            prop_assert_eq!(p.provenance(), Provenance::RankTransform);
            // each column is a permutation of 1/(n+1), ..., n/(n+1) (no ties a.s.)
            for j in 0..d {
                let mut col: Vec<f64> = p.data().column(j).iter().map(|v| v * (n + 1) as f64).collect();
                col.sort_by(f64::total_cmp);
                for (i, v) in col.iter().enumerate() {
                    prop_assert!((v - (i + 1) as f64).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn simple_pareto_uppers_at_least_u_inverse(seed in any::<u64>()) {
        let spec = GeneratorSpec::constant_one(2).unwrap();
        let v = simulate(&GpdSampleConfig::new(spec, Margins::SimplePareto, 200, seed)).unwrap();
        prop_assert!(v.as_slice().iter().all(|&x| x > 1.0));
    }
}
