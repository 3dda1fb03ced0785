use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use prftps::hankel::exact::{annihilates, integer_kernel, rank_mod, screen, PRIMES};
use prftps::hankel::*;
use prftps::Error;
use proptest::prelude::*;

/// Berlekamp-Massey over the rationals: length of the shortest linear recurrence.
fn linear_complexity(s: &[BigRational]) -> usize {
    let mut c = vec![BigRational::one()];
    let mut b = vec![BigRational::one()];
    let (mut l, mut m) = (0usize, 1usize);
    let mut bd = BigRational::one();
    for i in 0..s.len() {
        let mut d = s[i].clone();
        for j in 1..=l {
            if j < c.len() {
                d += &c[j] * &s[i - j];
            }
        }
        if d.is_zero() {
            m += 1;
            continue;
        }
        let coef = &d / &bd;
        let t = c.clone();
        if c.len() < b.len() + m {
            c.resize(b.len() + m, BigRational::zero());
        }
        for (j, bj) in b.iter().enumerate() {
            c[j + m] -= &coef * bj;
        }
        if 2 * l <= i {
            l = i + 1 - l;
            b = t;
            bd = d;
            m = 1;
        } else {
            m += 1;
        }
    }
    l
}

fn ints(v: &[i64]) -> Vec<BigInt> {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

#[test]
fn sample_counts() {
    assert_eq!(samples_for_dimension(1), 3);
    assert_eq!(samples_for_dimension(4), 9);
}

#[test]
fn difference_and_hankel_shapes() {
    let s = difference_sequence(&[1.0, 3.0, 6.0, 10.0]).unwrap();
    assert_eq!(s, vec![2.0, 3.0, 4.0]);
    assert!(matches!(difference_sequence(&[1.0]), Err(Error::TrajectoryTooShort { .. })));
    let h = hankel_matrix(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap();
    assert_eq!((h.nrows(), h.ncols()), (3, 3));
    assert_eq!((h[(0, 0)], h[(1, 2)], h[(2, 2)]), (1.0, 4.0, 5.0));
    assert!(matches!(hankel_matrix(&[1.0; 4], 2), Err(Error::InsufficientData { k: 2, needed: 5, have: 4 })));
    let t = defect_hankel(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
    assert_eq!((t.nrows(), t.ncols(), t[(2, 1)]), (3, 2, 4.0));
}

#[test]
fn single_node_trajectory() {
    // x = (a, b, b, b, ...): differences (d, 0, 0, ...).
    let x1 = [0.3, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0];
    let x2 = [2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    assert_eq!(test_dimension(&[&x1], &x2, 1, DEFAULT_RANK_TOL, 0).unwrap(), None);
    let p = test_dimension(&[&x1], &x2, 2, DEFAULT_RANK_TOL, 0).unwrap().unwrap();
    assert_eq!((p.degree, p.defect_round), (1, 5));
    assert!(p.beta[0].abs() < 1e-12 && (p.beta[1] - 1.0).abs() < 1e-12);
    let t1 = Trajectory::new(x1.to_vec());
    let t2 = Trajectory::new(x2.to_vec());
    assert_eq!(first_defect(&t1, &t2, DEFAULT_RANK_TOL).unwrap(), DefectScan::Found(p.clone()));
    assert!((final_value(&t1, &t2, &p).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn constant_trajectory_has_degree_zero() {
    let t = Trajectory::new(vec![4.0; 3]);
    let DefectScan::Found(p) = first_defect(&t, &t, DEFAULT_RANK_TOL).unwrap() else {
        panic!("constant trajectory must be detected");
    };
    assert_eq!((p.degree, p.beta.clone(), p.defect_round), (0, vec![1.0], 3));
    assert_eq!(final_value(&t, &t, &p).unwrap(), 1.0);
}

#[test]
fn short_trajectory_is_not_yet() {
    let t = Trajectory::new(vec![1.0, 2.0]);
    assert_eq!(first_defect(&t, &t, DEFAULT_RANK_TOL).unwrap(), DefectScan::NotYet);
    assert!(matches!(
        test_dimension(&[&[1.0, 2.0]], &[1.0, 2.0], 1, DEFAULT_RANK_TOL, 0),
        Err(Error::TrajectoryTooShort { needed: 3, have: 2 })
    ));
}

#[test]
fn value_deficient_before_mass_is_degenerate() {
    let x1 = [1.0, 1.0, 1.0];
    let x2 = [2.0, 1.0, 3.0];
    assert!(matches!(
        test_dimension(&[&x1], &x2, 1, DEFAULT_RANK_TOL, 4),
        Err(Error::Degenerate { node: 4, .. })
    ));
}

#[test]
fn final_value_is_scale_covariant() {
    // Geometric pair with the same ratio 3/2 in the limit.
    let x1: Vec<f64> = (0..9).map(|k| 3.0 + 0.5f64.powi(k) - 0.25f64.powi(k)).collect();
    let x2: Vec<f64> = (0..9).map(|k| 2.0 + 2.0 * 0.5f64.powi(k) + 0.25f64.powi(k)).collect();
    let t2 = Trajectory::new(x2);
    for c in [1.0, -3.0, 1e3] {
        let t1 = Trajectory::new(x1.iter().map(|x| c * x).collect());
        let DefectScan::Found(p) = first_defect(&t1, &t2, DEFAULT_RANK_TOL).unwrap() else {
            panic!("no defect");
        };
        assert_eq!(p.degree, 2);
        assert!((final_value(&t1, &t2, &p).unwrap() - 1.5 * c).abs() < 1e-9 * c.abs());
    }
}

#[test]
fn canonical_kernel_has_unit_norm_and_positive_lead() {
    let v = canonicalize(&[0.0, -3.0, 4.0]);
    assert_eq!(v, vec![0.0, 0.6, -0.8]);
    let m = defect_hankel(&[1.0, 2.0, 4.0, 8.0], 2).unwrap();
    assert!(is_rank_deficient(&m, DEFAULT_RANK_TOL));
    let k = kernel_vector(&m);
    assert!((k[0] - 2.0 / 5f64.sqrt()).abs() < 1e-12 && (k[1] + 1.0 / 5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn zero_matrix_is_deficient() {
    assert!(is_rank_deficient(&defect_hankel(&[0.0, 0.0], 1).unwrap(), 1e-8));
}

#[test]
fn modular_rank_examples() {
    let p = PRIMES[0];
    assert_eq!(rank_mod(vec![vec![1, 2], vec![2, 4]], p), 1);
    assert_eq!(rank_mod(vec![vec![1, 2], vec![3, 4]], p), 2);
    assert_eq!(rank_mod(vec![vec![0, 0], vec![0, 0]], p), 0);
    // 1, 2, 4, 8: one-term recurrence x_{r+1} = 2 x_r.
    let res: Vec<[u64; 2]> = [1u64, 2, 4, 8, 16, 32].iter().map(|&v| [v, v]).collect();
    assert!(!screen(&res, 1) || res[0][0] == 0);
    assert!(screen(&res, 2));
}

#[test]
fn integer_kernel_examples() {
    assert_eq!(integer_kernel(&ints(&[1, 2, 4, 8]), 2), Some(ints(&[-2, 1])));
    assert_eq!(integer_kernel(&ints(&[1, 0, 0, 0]), 2), Some(ints(&[0, 1])));
    assert_eq!(integer_kernel(&ints(&[0, 0]), 1), Some(ints(&[1])));
    assert_eq!(integer_kernel(&ints(&[1, 1, 2, 3]), 2), None);
    // Fibonacci needs three taps: gamma = (1, 1, -1) up to sign.
    let fib = ints(&[1, 1, 2, 3, 5, 8]);
    let g = integer_kernel(&fib, 3).unwrap();
    assert_eq!(g, ints(&[-1, -1, 1]));
    assert!(annihilates(&fib, &g));
}

proptest! {
    #[test]
    fn planted_recurrence_order_is_recovered(
        taps in prop::collection::vec(-4i64..=4, 1..5),
        seed in prop::collection::vec(-9i64..=9, 5),
    ) {
        // s_{r+d} = sum_i taps[i] s_{r+i}
        let d = taps.len();
        let mut s: Vec<BigInt> = ints(&seed[..d]);
        while s.len() < 2 * (d + 1) + 2 {
            let r = s.len() - d;
            let next: BigInt = taps.iter().enumerate().map(|(i, t)| BigInt::from(*t) * &s[r + i]).sum();
            s.push(next);
        }
        let rats: Vec<BigRational> = s.iter().cloned().map(BigRational::from_integer).collect();
        let lc = linear_complexity(&rats);
        prop_assert!(lc <= d);
        for k in 1..=lc {
            prop_assert_eq!(integer_kernel(&s, k), None, "k={} lc={}", k, lc);
        }
        let g = integer_kernel(&s, lc + 1).expect("kernel at lc + 1");
        prop_assert!(annihilates(&s, &g));
        prop_assert!(g.last().is_some_and(|v| v > &BigInt::zero()) || g.iter().rev().find(|v| !v.is_zero()).unwrap() > &BigInt::zero());
        let gcd = g.iter().fold(BigInt::zero(), |a, v| num_integer::Integer::gcd(&a, v));
        prop_assert!(gcd.is_one());
        let res: Vec<[u64; 2]> = s.iter().map(|v| [exact_residue(v, PRIMES[0]), exact_residue(v, PRIMES[1])]).collect();
        prop_assert!(screen(&res, lc + 1));
    }

    #[test]
    fn float_detection_matches_complexity(r1 in -0.9f64..0.9, r2 in -0.9f64..0.9, a in 0.5f64..2.0, b in 0.5f64..2.0) {
        prop_assume!((r1 - r2).abs() > 0.2 && r1.abs() > 0.1 && r2.abs() > 0.1);
        let x1: Vec<f64> = (0..11).map(|k| 1.0 + a * r1.powi(k) + b * r2.powi(k)).collect();
        let x2: Vec<f64> = (0..11).map(|k| 2.0 + b * r1.powi(k) - a * r2.powi(k)).collect();
        let t1 = Trajectory::new(x1);
        let t2 = Trajectory::new(x2);
        let DefectScan::Found(p) = first_defect(&t1, &t2, 1e-8).unwrap() else {
            return Err(TestCaseError::fail("no defect"));
        };
        prop_assert_eq!(p.degree, 2);
        prop_assert!((final_value(&t1, &t2, &p).unwrap() - 0.5).abs() < 1e-6);
    }
}

fn exact_residue(v: &BigInt, p: u64) -> u64 {
    prftps::hankel::exact::residue(v, p)
}
