//! Exact defect detection on integer difference sequences.
//!
//! Rank is screened modulo two 61/62-bit primes; a candidate defect is
//! confirmed and its kernel extracted by fraction-free (Bareiss) elimination.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub const PRIMES: [u64; 2] = [(1 << 61) - 1, (1 << 62) - 57];

pub fn residue(x: &BigInt, p: u64) -> u64 {
    x.mod_floor(&BigInt::from(p)).to_u64().expect("residue fits in u64")
}

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, p);
        }
        a = mul_mod(a, a, p);
        e >>= 1;
    }
    r
}

/// Rank of a dense matrix over `Z/pZ`.
pub fn rank_mod(mut rows: Vec<Vec<u64>>, p: u64) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows.len()).find(|&r| rows[r][c] != 0) else {
            continue;
        };
        rows.swap(rank, piv);
        let inv = pow_mod(rows[rank][c], p - 2, p);
        for r in rank + 1..rows.len() {
            if rows[r][c] == 0 {
                continue;
            }
            let f = mul_mod(rows[r][c], inv, p);
            for cc in c..cols {
                let sub = mul_mod(f, rows[rank][cc], p);
                rows[r][cc] = (rows[r][cc] + p - sub) % p;
            }
        }
        rank += 1;
    }
    rank
}

/// True when the `(k+1) x k` Hankel of `res` (residues mod `p`) is rank deficient mod `p`.
pub fn deficient_mod(res: &[u64], k: usize, p: u64) -> bool {
    assert!(res.len() >= 2 * k, "need {} residues", 2 * k);
    let rows = (0..=k).map(|r| res[r..r + k].to_vec()).collect();
    rank_mod(rows, p) < k
}

/// Deficient modulo every prime in [`PRIMES`]. `res[m][i]` is entry `m` modulo `PRIMES[i]`.
pub fn screen(res: &[[u64; 2]], k: usize) -> bool {
    PRIMES.iter().enumerate().all(|(i, &p)| {
        let r: Vec<u64> = res.iter().map(|x| x[i]).collect();
        deficient_mod(&r, k, p)
    })
}

/// Row echelon form by Bareiss elimination. Returns the pivot columns.
fn bareiss(a: &mut [Vec<BigInt>]) -> Vec<usize> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut prev = BigInt::one();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(piv) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, piv);
        for i in r + 1..rows {
            for cc in c + 1..cols {
                let v = &a[r][c] * &a[i][cc] - &a[i][c] * &a[r][cc];
                a[i][cc] = v / &prev;
            }
            a[i][c] = BigInt::zero();
        }
        prev = a[r][c].clone();
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Exact integer kernel vector of the `(k+1) x k` Hankel of `seq`, or `None` at full column rank.
/// The result is primitive (gcd 1) with a positive last nonzero entry.
pub fn integer_kernel(seq: &[BigInt], k: usize) -> Option<Vec<BigInt>> {
    assert!(seq.len() >= 2 * k, "need {} entries", 2 * k);
    let mut a: Vec<Vec<BigInt>> = (0..=k).map(|r| seq[r..r + k].to_vec()).collect();
    let pivots = bareiss(&mut a);
    if pivots.len() == k {
        return None;
    }
    let free = (0..k).find(|c| !pivots.contains(c)).expect("a free column");
    let mut x = vec![BigRational::zero(); k];
    x[free] = BigRational::one();
    for (t, &c) in pivots.iter().enumerate().rev() {
        if c > free {
            continue;
        }
        let mut s = BigRational::zero();
        for cc in c + 1..k {
            if !x[cc].is_zero() {
                s += BigRational::from(a[t][cc].clone()) * &x[cc];
            }
        }
        x[c] = -s / BigRational::from(a[t][c].clone());
    }
    let lcm = x.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let mut ints: Vec<BigInt> = x.iter().map(|v| v.numer() * (&lcm / v.denom())).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, v| acc.gcd(v));
    if !g.is_zero() && !g.is_one() {
        for v in &mut ints {
            *v /= &g;
        }
    }
    if ints.iter().rev().find(|v| !v.is_zero()).is_some_and(|v| v.is_negative()) {
        for v in &mut ints {
            *v = -v.clone();
        }
    }
    Some(ints)
}

/// `sum_c gamma_c seq[r + c] == 0` for every row `r` of the `(k+1) x k` Hankel.
pub fn annihilates(seq: &[BigInt], gamma: &[BigInt]) -> bool {
    let k = gamma.len();
    (0..=k).all(|r| {
        gamma
            .iter()
            .enumerate()
            .map(|(c, g)| g * &seq[r + c])
            .sum::<BigInt>()
            .is_zero()
    })
}

/// `sum_m gamma_m x[m]` over the first `gamma.len()` entries.
pub fn dot(gamma: &[BigInt], x: &[BigInt]) -> BigInt {
    gamma.iter().zip(x).map(|(g, v)| g * v).sum()
}
