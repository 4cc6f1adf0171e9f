//! Exact elements of `Q(ζ_m)`: integer coefficient vectors in the power
//! basis `1, ζ, …, ζ^{φ(m)-1}` (reduced modulo the cyclotomic polynomial)
//! over a positive common denominator.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

fn cyclotomic_cache() -> &'static Mutex<HashMap<u64, Arc<Vec<i64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Vec<i64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `Φ_m`, low degree first.
pub fn cyclotomic_polynomial(m: u64) -> Arc<Vec<i64>> {
    if let Some(c) = cyclotomic_cache().lock().unwrap().get(&m) {
        return c.clone();
    }
    // x^m - 1 divided by Φ_d for every proper divisor d.
    let mut num: Vec<i128> = vec![0; m as usize + 1];
    num[0] = -1;
    num[m as usize] = 1;
    for d in 1..m {
        if m % d == 0 {
            let phi = cyclotomic_polynomial(d);
            num = exact_div(&num, &phi);
        }
    }
    let out: Vec<i64> = num.iter().map(|&c| i64::try_from(c).expect("small coefficients")).collect();
    let out = Arc::new(out);
    cyclotomic_cache().lock().unwrap().insert(m, out.clone());
    out
}

fn exact_div(num: &[i128], den: &[i64]) -> Vec<i128> {
    let dn = den.len() - 1;
    let mut r = num.to_vec();
    let nn = r.len() - 1;
    let mut q = vec![0i128; nn - dn + 1];
    for i in (0..=nn - dn).rev() {
        let c = r[i + dn] / den[dn] as i128;
        q[i] = c;
        for (j, &d) in den.iter().enumerate() {
            r[i + j] -= c * d as i128;
        }
    }
    debug_assert!(r.iter().all(|&x| x == 0));
    q
}

/// An element of `Q(ζ_m)`.
#[derive(Clone, PartialEq, Eq)]
pub struct CycNumber {
    m: u64,
    num: Vec<BigInt>,
    den: BigInt,
}

impl fmt::Debug for CycNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CycNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.to_rational() {
            return write!(f, "{r}");
        }
        let mut parts = Vec::new();
        for (i, c) in self.num.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            parts.push(match i {
                0 => format!("{c}"),
                _ => format!("{c}*z^{i}"),
            });
        }
        let body = parts.join(" + ");
        if self.den.is_one() {
            write!(f, "{body} [z=zeta_{}]", self.m)
        } else {
            write!(f, "({body})/{} [z=zeta_{}]", self.den, self.m)
        }
    }
}

impl CycNumber {
    fn phi_len(m: u64) -> usize {
        cyclotomic_polynomial(m).len() - 1
    }

    pub fn zero(m: u64) -> Self {
        CycNumber { m, num: vec![BigInt::zero(); Self::phi_len(m)], den: BigInt::one() }
    }
    pub fn from_int(m: u64, v: impl Into<BigInt>) -> Self {
        let mut z = Self::zero(m);
        z.num[0] = v.into();
        z
    }
    pub fn from_rational(m: u64, r: &BigRational) -> Self {
        let mut z = Self::zero(m);
        z.num[0] = r.numer().clone();
        z.den = r.denom().clone();
        z.normalize();
        z
    }
    /// `ζ_m^k`.
    pub fn root_of_unity(m: u64, k: i64) -> Self {
        let mut counts = vec![0i64; m as usize];
        counts[k.rem_euclid(m as i64) as usize] = 1;
        Self::from_power_counts(m, &counts)
    }

    /// `Σ_k counts[k] ζ_m^k`.
    pub fn from_power_counts(m: u64, counts: &[i64]) -> Self {
        let wide: Vec<i128> = counts.iter().map(|&c| c as i128).collect();
        Self::from_power_counts_wide(m, &wide)
    }

    /// `Σ_k counts[k] ζ_m^k` with wide integer counts.
    pub fn from_power_counts_wide(m: u64, counts: &[i128]) -> Self {
        assert_eq!(counts.len() as u64, m);
        let phi = cyclotomic_polynomial(m);
        let d = phi.len() - 1;
        let mut r: Vec<BigInt> = counts.iter().map(|&c| BigInt::from(c)).collect();
        // Φ_m is monic: eliminate from the top.
        for i in (d..r.len()).rev() {
            if r[i].is_zero() {
                continue;
            }
            let c = r[i].clone();
            for (j, &pj) in phi.iter().enumerate() {
                if pj != 0 {
                    r[i - d + j] -= &c * pj;
                }
            }
        }
        r.truncate(d);
        let mut out = CycNumber { m, num: r, den: BigInt::one() };
        out.normalize();
        out
    }

    pub fn modulus(&self) -> u64 {
        self.m
    }
    pub fn numerators(&self) -> &[BigInt] {
        &self.num
    }
    pub fn denominator(&self) -> &BigInt {
        &self.den
    }
    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|c| c.is_zero())
    }
    pub fn to_rational(&self) -> Option<BigRational> {
        if self.num.iter().skip(1).all(|c| c.is_zero()) {
            Some(BigRational::new(self.num[0].clone(), self.den.clone()))
        } else {
            None
        }
    }
    pub fn to_integer(&self) -> Option<BigInt> {
        self.to_rational().filter(|r| r.is_integer()).map(|r| r.to_integer())
    }
    pub fn to_i64(&self) -> Option<i64> {
        self.to_integer().and_then(|v| v.to_i64())
    }

    fn normalize(&mut self) {
        if self.den.is_negative() {
            self.den = -self.den.clone();
            for c in self.num.iter_mut() {
                *c = -c.clone();
            }
        }
        let mut g = self.den.clone();
        for c in &self.num {
            if g.is_one() {
                break;
            }
            g = g.gcd(c);
        }
        if self.is_zero() {
            self.den = BigInt::one();
            return;
        }
        if !g.is_one() && !g.is_zero() {
            for c in self.num.iter_mut() {
                *c = &*c / &g;
            }
            self.den = &self.den / &g;
        }
    }

    /// Same number in `Q(ζ_{m'})` for a multiple `m'` of `m`.
    pub fn lift_to(&self, m2: u64) -> Self {
        assert!(m2 % self.m == 0, "target modulus must be a multiple");
        if m2 == self.m {
            return self.clone();
        }
        let step = (m2 / self.m) as usize;
        let mut counts = vec![BigInt::zero(); m2 as usize];
        for (i, c) in self.num.iter().enumerate() {
            counts[i * step] = c.clone();
        }
        let mut out = Self::reduce_big(m2, counts);
        out.den = self.den.clone();
        out.normalize();
        out
    }

    fn reduce_big(m: u64, mut r: Vec<BigInt>) -> Self {
        let phi = cyclotomic_polynomial(m);
        let d = phi.len() - 1;
        // fold powers ≥ m using ζ^m = 1
        if r.len() > m as usize {
            for i in m as usize..r.len() {
                let c = std::mem::take(&mut r[i]);
                r[i % m as usize] += c;
            }
            r.truncate(m as usize);
        }
        for i in (d..r.len()).rev() {
            if r[i].is_zero() {
                continue;
            }
            let c = r[i].clone();
            for (j, &pj) in phi.iter().enumerate() {
                if pj != 0 {
                    r[i - d + j] -= &c * pj;
                }
            }
        }
        r.resize(d, BigInt::zero());
        CycNumber { m, num: r, den: BigInt::one() }
    }

    fn common(&self, other: &Self) -> (Self, Self) {
        if self.m == other.m {
            return (self.clone(), other.clone());
        }
        let l = self.m.lcm(&other.m);
        (self.lift_to(l), other.lift_to(l))
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = self.common(other);
        let num = a
            .num
            .iter()
            .zip(&b.num)
            .map(|(x, y)| x * &b.den + y * &a.den)
            .collect();
        let mut out = CycNumber { m: a.m, num, den: &a.den * &b.den };
        out.normalize();
        out
    }
    pub fn neg(&self) -> Self {
        CycNumber { m: self.m, num: self.num.iter().map(|c| -c).collect(), den: self.den.clone() }
    }
    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }
    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = self.common(other);
        let d = a.num.len();
        let mut prod = vec![BigInt::zero(); 2 * d];
        for (i, x) in a.num.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.num.iter().enumerate() {
                if !y.is_zero() {
                    prod[i + j] += x * y;
                }
            }
        }
        let mut out = Self::reduce_big(a.m, prod);
        out.den = &a.den * &b.den;
        out.normalize();
        out
    }
    pub fn scale(&self, r: &BigRational) -> Self {
        let mut out = CycNumber {
            m: self.m,
            num: self.num.iter().map(|c| c * r.numer()).collect(),
            den: &self.den * r.denom(),
        };
        out.normalize();
        out
    }
    pub fn scale_int(&self, k: impl Into<BigInt>) -> Self {
        let k = k.into();
        let mut out =
            CycNumber { m: self.m, num: self.num.iter().map(|c| c * &k).collect(), den: self.den.clone() };
        out.normalize();
        out
    }

    /// Numerator coefficients and denominator as decimal strings (for reports).
    pub fn to_parts(&self) -> (Vec<String>, String) {
        (self.num.iter().map(|c| c.to_string()).collect(), self.den.to_string())
    }
}

/// Accumulates `Σ c_k ζ_m^k` with machine-integer counts.
#[derive(Clone, Debug)]
pub struct PowerHistogram {
    pub m: u64,
    pub counts: Vec<i128>,
}

impl PowerHistogram {
    pub fn new(m: u64) -> Self {
        PowerHistogram { m, counts: vec![0; m as usize] }
    }
    #[inline]
    pub fn bump(&mut self, k: u64) {
        self.counts[k as usize] += 1;
    }
    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
    }
    pub fn total(&self) -> i128 {
        self.counts.iter().sum()
    }
    pub fn value(&self) -> CycNumber {
        CycNumber::from_power_counts_wide(self.m, &self.counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cyclotomic_polynomials() {
        assert_eq!(*cyclotomic_polynomial(1), vec![-1, 1]);
        assert_eq!(*cyclotomic_polynomial(4), vec![1, 0, 1]);
        assert_eq!(*cyclotomic_polynomial(6), vec![1, -1, 1]);
        assert_eq!(cyclotomic_polynomial(775).len() - 1, 600);
    }

    #[test]
    fn sum_of_all_roots_vanishes() {
        for m in [1u64, 2, 3, 4, 12, 31, 775] {
            let counts = vec![1i64; m as usize];
            let s = CycNumber::from_power_counts(m, &counts);
            if m == 1 {
                assert_eq!(s.to_i64(), Some(1));
            } else {
                assert!(s.is_zero(), "m={m}");
            }
        }
    }

    #[test]
    fn roots_multiply() {
        let m = 12;
        for a in 0..12 {
            for b in 0..12 {
                let lhs = CycNumber::root_of_unity(m, a).mul(&CycNumber::root_of_unity(m, b));
                assert_eq!(lhs, CycNumber::root_of_unity(m, a + b));
            }
        }
    }

    #[test]
    fn lifting_preserves_values() {
        let z3 = CycNumber::root_of_unity(3, 1);
        assert_eq!(z3.lift_to(12), CycNumber::root_of_unity(12, 4));
        let half = BigRational::new(1.into(), 2.into());
        let x = z3.scale(&half);
        assert_eq!(x.add(&x), z3);
    }

    #[test]
    fn rational_detection() {
        // ζ_4 + ζ_4^3 = 0, ζ_3 + ζ_3^2 = -1
        let a = CycNumber::root_of_unity(3, 1).add(&CycNumber::root_of_unity(3, 2));
        assert_eq!(a.to_i64(), Some(-1));
        let b = CycNumber::root_of_unity(4, 1).add(&CycNumber::root_of_unity(4, 3));
        assert!(b.is_zero());
    }

    proptest! {
        #[test]
        fn ring_axioms(a in proptest::collection::vec(-5i64..5, 20), b in proptest::collection::vec(-5i64..5, 20)) {
            let x = CycNumber::from_power_counts(20, &a);
            let y = CycNumber::from_power_counts(20, &b);
            prop_assert_eq!(x.add(&y).sub(&y), x.clone());
            prop_assert_eq!(x.mul(&y), y.mul(&x));
            let one = CycNumber::from_int(20, 1);
            prop_assert_eq!(x.mul(&one), x);
        }
    }
}
