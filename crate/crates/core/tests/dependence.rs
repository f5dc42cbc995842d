use powersplit::dep::{
    critical_value, delta_bar, dependence_test, dhsic_statistic, pearson_cc, DhsicInput,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normals(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gaussian Gram with `sigma^2 = median(d^2) / 2` over all `i != j`, built
/// without the library's helpers.
fn naive_gram(x: &[f64]) -> Vec<Vec<f64>> {
    let m = x.len();
    let mut d2 = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                d2.push((x[i] - x[j]).powi(2));
            }
        }
    }
    d2.sort_by(f64::total_cmp);
    let k = d2.len();
    let mut med = if k % 2 == 1 {
        d2[k / 2]
    } else {
        (d2[k / 2 - 1] + d2[k / 2]) / 2.0
    };
    if med == 0.0 {
        let nz: Vec<f64> = d2.iter().copied().filter(|&v| v > 0.0).collect();
        if nz.is_empty() {
            return vec![vec![1.0; m]; m];
        }
        let k = nz.len();
        med = if k % 2 == 1 {
            nz[k / 2]
        } else {
            (nz[k / 2 - 1] + nz[k / 2]) / 2.0
        };
    }
    let s2 = med / 2.0;
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (-(x[i] - x[j]).powi(2) / s2).exp())
                .collect()
        })
        .collect()
}

/// Term-by-term transcription of the three-term estimator.
fn naive_dhsic(vars: &[Vec<f64>]) -> f64 {
    let d = vars.len();
    let m = vars[0].len();
    let mf = m as f64;
    let grams: Vec<Vec<Vec<f64>>> = vars.iter().map(|v| naive_gram(v)).collect();
    let mut t1 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let mut p = 1.0;
            for g in &grams {
                p *= g[i][j];
            }
            t1 += p;
        }
    }
    t1 /= mf * mf;
    let mut t2 = 1.0;
    for g in &grams {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += g[i][j];
            }
        }
        t2 *= s;
    }
    t2 /= mf.powi(2 * d as i32);
    let mut t3 = 0.0;
    for i in 0..m {
        let mut p = 1.0;
        for g in &grams {
            let mut s = 0.0;
            for j in 0..m {
                s += g[i][j];
            }
            p *= s;
        }
        t3 += p;
    }
    t3 *= 2.0 / mf.powi(d as i32 + 1);
    t1 + t2 - t3
}

#[test]
fn matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..60 {
        let d = 2 + trial % 2;
        let m = 2 + trial % 19;
        let vars: Vec<Vec<f64>> = (0..d).map(|_| normals(&mut rng, m)).collect();
        let input = DhsicInput::new(vars.clone()).unwrap();
        let got = dhsic_statistic(&input);
        let want = naive_dhsic(&vars);
        assert!((got - want).abs() <= 1e-12, "d={d} m={m}: {got} vs {want}");
    }
}

#[test]
fn hand_sized_pair() {
    let vars = vec![vec![0.0, 1.0, 3.0], vec![2.0, -1.0, 0.5]];
    let got = dhsic_statistic(&DhsicInput::new(vars.clone()).unwrap());
    assert!((got - naive_dhsic(&vars)).abs() <= 1e-12);
}

#[test]
fn constant_variable_collapses() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = normals(&mut rng, 12);
    let z = normals(&mut rng, 12);
    let pair = DhsicInput::new(vec![x.clone(), vec![2.5; 12]]).unwrap();
    assert!(dhsic_statistic(&pair).abs() < 1e-15);
    assert!(naive_dhsic(&[x.clone(), vec![2.5; 12]]).abs() < 1e-15);
    let report = dependence_test(&pair, 0.05, 200, 1).unwrap();
    assert_eq!(report.degenerate_variables, vec![1]);
    assert!(!report.reject);

    // with three variables the constant one drops out of the product
    let triple = DhsicInput::new(vec![x.clone(), vec![2.5; 12], z.clone()]).unwrap();
    let reduced = DhsicInput::new(vec![x, z]).unwrap();
    assert!((dhsic_statistic(&triple) - dhsic_statistic(&reduced)).abs() < 1e-14);
}

#[test]
fn critical_value_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let input = DhsicInput::new(vec![normals(&mut rng, 40), normals(&mut rng, 40)]).unwrap();
    assert_eq!(
        critical_value(&input, 0.05, 300, 4).unwrap(),
        critical_value(&input, 0.05, 300, 4).unwrap()
    );
}

#[test]
fn independent_normals_pass_at_nominal_rate() {
    let trials = 1000;
    let mut rejections = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let input = DhsicInput::new(vec![normals(&mut rng, 200), normals(&mut rng, 200)]).unwrap();
        if dependence_test(&input, 0.05, 200, t).unwrap().reject {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    assert!((0.03..=0.07).contains(&rate), "type-I rate {rate}");
}

#[test]
fn identical_sequences_are_rejected() {
    let trials = 100;
    let mut rejections = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + t);
        let x = normals(&mut rng, 100);
        let input = DhsicInput::new(vec![x.clone(), x]).unwrap();
        if dependence_test(&input, 0.05, 200, t).unwrap().reject {
            rejections += 1;
        }
    }
    assert!(rejections >= 99, "{rejections} of {trials}");
}

#[test]
fn noisy_copies_are_rejected() {
    let trials = 100;
    let mut rejections = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + t);
        let x = normals(&mut rng, 200);
        let y: Vec<f64> = x
            .iter()
            .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let input = DhsicInput::new(vec![x, y]).unwrap();
        if dependence_test(&input, 0.05, 200, t).unwrap().reject {
            rejections += 1;
        }
    }
    assert!(rejections >= 99, "{rejections} of {trials}");
}

#[test]
fn delta_bar_examples() {
    assert_eq!(delta_bar(1.0, 2.0).unwrap(), 0.0);
    assert_eq!(delta_bar(4.0, 2.0).unwrap(), 2.0);
    assert!(delta_bar(1.0, 0.0).is_err());
}

#[test]
fn pearson_of_independent_normals_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = normals(&mut rng, 10_000);
    let b = normals(&mut rng, 10_000);
    assert!(pearson_cc(&a, &b).unwrap().abs() < 0.03);
}

fn sequences() -> impl Strategy<Value = (Vec<Vec<f64>>, u64)> {
    (2usize..4, 3usize..25, any::<u64>()).prop_map(|(d, m, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ((0..d).map(|_| normals(&mut rng, m)).collect(), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_permutation_invariance((vars, seed) in sequences()) {
        let base = dhsic_statistic(&DhsicInput::new(vars.clone()).unwrap());
        let mut idx: Vec<usize> = (0..vars[0].len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let permuted: Vec<Vec<f64>> = vars.iter().map(|v| idx.iter().map(|&i| v[i]).collect()).collect();
        let other = dhsic_statistic(&DhsicInput::new(permuted).unwrap());
        prop_assert!((base - other).abs() <= 1e-12);
    }

    #[test]
    fn statistic_is_nonnegative((vars, _) in sequences()) {
        prop_assert!(dhsic_statistic(&DhsicInput::new(vars).unwrap()) >= -1e-10);
    }

    #[test]
    fn delta_bar_is_scale_invariant((vars, seed) in sequences(), c in 0.01f64..100.0) {
        let scaled: Vec<Vec<f64>> = vars.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        let a = dependence_test(&DhsicInput::new(vars).unwrap(), 0.05, 100, seed).unwrap();
        let b = dependence_test(&DhsicInput::new(scaled).unwrap(), 0.05, 100, seed).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.abs().max(1e-12));
        prop_assert!((a.delta_bar - b.delta_bar).abs() <= 1e-9 * a.delta_bar.max(1e-12));
        prop_assert!(a.delta_bar == 0.0 || a.delta_bar > 1.0);
    }
}
