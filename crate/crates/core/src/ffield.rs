//! Finite fields `F_p ⊂ F_{p^d} ⊂ … ⊂ F_{p^D}` realised inside one top field.
//!
//! Every element is stored as a discrete logarithm with respect to a fixed
//! primitive element `g` of the top field.  A layer of degree `d` is the fixed
//! field of `x ↦ x^{p^d}`; its preferred generator is `g^{(p^D-1)/(p^d-1)}`, so
//! embeddings between layers are the identity on logarithms and automatically
//! commute with Frobenius.  Multiplication is addition of logarithms and
//! addition goes through a Zech table.

use crate::error::{Error, Result};
use std::fmt;

/// Largest top field we are willing to tabulate.
pub const MAX_FIELD_SIZE: u64 = 10_000_000;

const ZERO_LOG: u32 = u32::MAX;

/// A finite field element: layer index plus logarithm (or zero).
///
/// Equality and hashing look at the value only; the layer tag records where
/// the element was created and which layer `sgn`, `norm_to` etc. refer to.
#[derive(Clone, Copy)]
pub struct FqElem {
    layer: u8,
    log: u32,
}

impl PartialEq for FqElem {
    fn eq(&self, other: &Self) -> bool {
        self.log == other.log
    }
}
impl Eq for FqElem {}
impl std::hash::Hash for FqElem {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.log.hash(state)
    }
}

impl fmt::Debug for FqElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log == ZERO_LOG {
            write!(f, "0@L{}", self.layer)
        } else {
            write!(f, "G^{}@L{}", self.log, self.layer)
        }
    }
}

impl FqElem {
    pub fn layer(self) -> usize {
        self.layer as usize
    }
    pub fn is_zero(self) -> bool {
        self.log == ZERO_LOG
    }
    /// Logarithm with respect to the top-field generator, `None` for zero.
    pub fn top_log(self) -> Option<u64> {
        (self.log != ZERO_LOG).then_some(self.log as u64)
    }
}

#[derive(Clone, Debug)]
pub struct Layer {
    degree: u32,
    size: u64,
    /// `(Q_top - 1) / (size - 1)`: logs of layer elements are multiples of this.
    step: u64,
    /// Minimal polynomial over `F_p` of the layer generator, low degree first.
    poly: Vec<u64>,
}

impl Layer {
    pub fn degree(&self) -> u32 {
        self.degree
    }
    pub fn size(&self) -> u64 {
        self.size
    }
    pub fn poly(&self) -> &[u64] {
        &self.poly
    }
}

/// A compatible family of finite fields of characteristic `p`.
pub struct FieldTower {
    p: u64,
    top_degree: u32,
    order: u64,
    modulus: Vec<u64>,
    conway: bool,
    generator_code: u64,
    layers: Vec<Layer>,
    exp_code: Vec<u32>,
    log_of: Vec<u32>,
    zech: Vec<u32>,
}

impl fmt::Debug for FieldTower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldTower")
            .field("p", &self.p)
            .field("degrees", &self.layers.iter().map(|l| l.degree).collect::<Vec<_>>())
            .field("conway", &self.conway)
            .finish()
    }
}

/// Bundled Conway polynomials, coefficients low degree first (monic).
const CONWAY: &[(u64, &[u64])] = &[
    (2, &[1, 1]),
    (2, &[1, 1, 1]),
    (2, &[1, 1, 0, 1]),
    (2, &[1, 1, 0, 0, 1]),
    (2, &[1, 0, 1, 0, 0, 1]),
    (2, &[1, 1, 0, 1, 1, 0, 1]),
    (3, &[1, 1]),
    (3, &[2, 2, 1]),
    (3, &[1, 2, 0, 1]),
    (3, &[2, 0, 0, 2, 1]),
    (3, &[1, 2, 0, 0, 0, 1]),
    (3, &[2, 2, 1, 0, 2, 0, 1]),
    (5, &[3, 1]),
    (5, &[2, 4, 1]),
    (5, &[3, 3, 0, 1]),
    (5, &[2, 4, 4, 0, 1]),
    (5, &[3, 4, 0, 0, 0, 1]),
    (5, &[2, 0, 1, 4, 1, 0, 1]),
    (7, &[4, 1]),
    (7, &[3, 6, 1]),
    (7, &[4, 0, 6, 1]),
    (7, &[3, 4, 5, 0, 1]),
    (7, &[4, 1, 0, 0, 0, 1]),
    (11, &[9, 1]),
    (11, &[2, 7, 1]),
    (11, &[9, 2, 0, 1]),
    (13, &[11, 1]),
    (13, &[2, 12, 1]),
    (13, &[11, 2, 0, 1]),
];

fn conway_entry(p: u64, d: u32) -> Option<&'static [u64]> {
    CONWAY
        .iter()
        .find(|(q, c)| *q == p && c.len() == d as usize + 1)
        .map(|(_, c)| *c)
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub fn divisors(n: u64) -> Vec<u64> {
    (1..=n).filter(|d| n % d == 0).collect()
}

pub fn moebius(n: u64) -> i64 {
    let mut m = n;
    let mut sign = 1;
    let mut d = 2;
    while d * d <= m {
        if m % d == 0 {
            m /= d;
            if m % d == 0 {
                return 0;
            }
            sign = -sign;
        }
        d += 1;
    }
    if m > 1 {
        sign = -sign;
    }
    sign
}

fn mod_pow(mut b: u128, mut e: u128, m: u128) -> u128 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

// --- dense polynomials over F_p, low degree first -------------------------

fn poly_trim(a: &mut Vec<u64>) {
    while a.len() > 1 && *a.last().unwrap() == 0 {
        a.pop();
    }
}

fn poly_rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut r = a.to_vec();
    poly_trim(&mut r);
    let dm = m.len() - 1;
    let lead_inv = mod_pow(m[dm] as u128, (p - 2) as u128, p as u128) as u64;
    while r.len() > dm && !(r.len() == 1 && r[0] == 0) {
        let k = r.len() - 1 - dm;
        let c = r[r.len() - 1] * lead_inv % p;
        for (i, &mi) in m.iter().enumerate() {
            r[k + i] = (r[k + i] + p - c * mi % p) % p;
        }
        poly_trim(&mut r);
        if r.len() - 1 < dm {
            break;
        }
    }
    r
}

fn poly_mulmod(a: &[u64], b: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut prod = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x * y) % p;
        }
    }
    poly_rem(&prod, m, p)
}

fn poly_powmod(base: &[u64], mut e: u128, m: &[u64], p: u64) -> Vec<u64> {
    let mut r = vec![1u64];
    let mut b = poly_rem(base, m, p);
    while e > 0 {
        if e & 1 == 1 {
            r = poly_mulmod(&r, &b, m, p);
        }
        b = poly_mulmod(&b, &b, m, p);
        e >>= 1;
    }
    r
}

fn poly_sub(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let n = a.len().max(b.len());
    let mut r: Vec<u64> = (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0) + p - b.get(i).copied().unwrap_or(0)) % p)
        .collect();
    poly_trim(&mut r);
    r
}

fn poly_gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    poly_trim(&mut x);
    poly_trim(&mut y);
    while !(y.len() == 1 && y[0] == 0) {
        let r = poly_rem(&x, &y, p);
        x = y;
        y = r;
    }
    x
}

/// Irreducibility over `F_p` via `gcd(x^{p^i} - x, f) = 1` for `i ≤ deg/2`.
pub fn is_irreducible(f: &[u64], p: u64) -> bool {
    let d = f.len() - 1;
    if d == 0 {
        return false;
    }
    if d == 1 {
        return true;
    }
    let x = vec![0, 1];
    let mut xp = x.clone();
    for _ in 1..=d / 2 {
        xp = poly_powmod(&xp, p as u128, f, p);
        let g = poly_gcd(f, &poly_sub(&xp, &x, p), p);
        if g.len() > 1 {
            return false;
        }
    }
    true
}

fn lex_first_irreducible(p: u64, d: u32) -> Vec<u64> {
    let d = d as usize;
    let total = p.pow(d as u32);
    for code in 0..total {
        let mut f = vec![0u64; d + 1];
        let mut c = code;
        for slot in f.iter_mut().take(d) {
            *slot = c % p;
            c /= p;
        }
        f[d] = 1;
        if is_irreducible(&f, p) {
            return f;
        }
    }
    unreachable!("irreducible polynomials exist in every degree")
}

fn code_to_poly(code: u64, p: u64, d: usize) -> Vec<u64> {
    let mut v = vec![0u64; d];
    let mut c = code;
    for slot in v.iter_mut() {
        *slot = c % p;
        c /= p;
    }
    v
}

fn poly_to_code(v: &[u64], p: u64) -> u64 {
    v.iter().rev().fold(0u64, |acc, &c| acc * p + c)
}

impl FieldTower {
    /// Builds the tower with top degree `lcm`-closed over the requested
    /// layer degrees.  Layer 0 is always the prime field.
    pub fn new(p: u64, degrees: &[u32]) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Config(format!("{p} is not prime")));
        }
        let mut degs: Vec<u32> = degrees.to_vec();
        degs.push(1);
        degs.sort_unstable();
        degs.dedup();
        let top = *degs.last().unwrap();
        if degs.iter().any(|d| top % d != 0) {
            return Err(Error::Config(format!(
                "layer degrees {degs:?} do not all divide the top degree {top}"
            )));
        }
        let order = (p as u128).pow(top);
        if order > MAX_FIELD_SIZE as u128 {
            return Err(Error::Config(format!(
                "field of size {order} exceeds the cap {MAX_FIELD_SIZE}"
            )));
        }
        let order = order as u64;
        let (modulus, conway) = Self::choose_modulus(p, top);
        let mut tower = Self::tabulate(p, top, order, modulus, conway);
        tower.layers = degs
            .iter()
            .map(|&d| {
                let size = p.pow(d);
                Layer { degree: d, size, step: (order - 1) / (size - 1), poly: Vec::new() }
            })
            .collect();
        for i in 0..tower.layers.len() {
            let gen = FqElem { layer: i as u8, log: tower.layers[i].step as u32 };
            let poly = tower.minimal_polynomial(gen);
            tower.layers[i].poly = poly;
        }
        if tower.conway && !tower.conway_compatible() {
            let modulus = lex_first_irreducible(p, top);
            let mut fallback = Self::tabulate(p, top, order, modulus, false);
            fallback.layers = tower.layers.clone();
            for i in 0..fallback.layers.len() {
                let gen = FqElem { layer: i as u8, log: fallback.layers[i].step as u32 };
                fallback.layers[i].poly = fallback.minimal_polynomial(gen);
            }
            return Ok(fallback);
        }
        Ok(tower)
    }

    fn choose_modulus(p: u64, d: u32) -> (Vec<u64>, bool) {
        if let Some(c) = conway_entry(p, d) {
            if is_irreducible(c, p) {
                return (c.to_vec(), true);
            }
        }
        (lex_first_irreducible(p, d), false)
    }

    fn tabulate(p: u64, d: u32, order: u64, modulus: Vec<u64>, conway: bool) -> Self {
        let du = d as usize;
        let n1 = order - 1;
        let factors = prime_factors(n1);
        let is_primitive = |g: &[u64]| {
            factors.iter().all(|&r| poly_powmod(g, (n1 / r) as u128, &modulus, p) != vec![1])
        };
        // The root x of the modulus when it is primitive, else the first primitive code.
        let root_code = if du == 1 { (p - modulus[0] % p) % p } else { p };
        let primitive_code = |c: u64| {
            let mut g = code_to_poly(c, p, du);
            poly_trim(&mut g);
            c != 0 && is_primitive(&g)
        };
        let gen_code = if primitive_code(root_code) {
            root_code
        } else {
            (1..order).find(|&c| primitive_code(c)).expect("a primitive element always exists")
        };
        let conway = conway && gen_code == root_code;
        let g = code_to_poly(gen_code, p, du);
        let mut exp_code = vec![0u32; n1 as usize];
        let mut log_of = vec![ZERO_LOG; order as usize];
        let mut cur = vec![0u64; du];
        cur[0] = 1;
        for k in 0..n1 {
            let code = poly_to_code(&cur, p);
            exp_code[k as usize] = code as u32;
            log_of[code as usize] = k as u32;
            let mut next = poly_mulmod(&cur, &g, &modulus, p);
            next.resize(du, 0);
            cur = next;
        }
        let mut zech = vec![ZERO_LOG; n1 as usize];
        for k in 0..n1 {
            let code = exp_code[k as usize] as u64;
            let d0 = code % p;
            let plus_one = code - d0 + (d0 + 1) % p;
            zech[k as usize] = log_of[plus_one as usize];
        }
        FieldTower {
            p,
            top_degree: d,
            order,
            modulus,
            conway,
            generator_code: gen_code,
            layers: Vec::new(),
            exp_code,
            log_of,
            zech,
        }
    }

    /// Checks that each layer polynomial is the bundled Conway polynomial.
    fn conway_compatible(&self) -> bool {
        self.layers.iter().all(|l| match conway_entry(self.p, l.degree) {
            Some(c) => c == l.poly.as_slice(),
            None => true,
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }
    pub fn top_degree(&self) -> u32 {
        self.top_degree
    }
    pub fn top_order(&self) -> u64 {
        self.order
    }
    pub fn uses_conway(&self) -> bool {
        self.conway
    }
    pub fn modulus(&self) -> &[u64] {
        &self.modulus
    }
    pub fn generator_code(&self) -> u64 {
        self.generator_code
    }
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }
    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }
    pub fn layer_size(&self, i: usize) -> u64 {
        self.layers[i].size
    }
    pub fn layer_degree(&self, i: usize) -> u32 {
        self.layers[i].degree
    }
    /// Index of the layer of the given degree over `F_p`.
    pub fn layer_of_degree(&self, d: u32) -> Option<usize> {
        self.layers.iter().position(|l| l.degree == d)
    }

    fn n1(&self) -> u64 {
        self.order - 1
    }

    pub fn zero(&self, layer: usize) -> FqElem {
        FqElem { layer: layer as u8, log: ZERO_LOG }
    }
    pub fn one(&self, layer: usize) -> FqElem {
        FqElem { layer: layer as u8, log: 0 }
    }
    /// The preferred generator of the layer's multiplicative group.
    pub fn generator(&self, layer: usize) -> FqElem {
        FqElem { layer: layer as u8, log: (self.layers[layer].step % self.n1().max(1)) as u32 }
    }
    /// `g_layer^j`.
    pub fn gen_pow(&self, layer: usize, j: i64) -> FqElem {
        let l = &self.layers[layer];
        let m = (l.size - 1) as i64;
        let j = j.rem_euclid(m.max(1)) as u64;
        FqElem { layer: layer as u8, log: ((j * l.step) % self.n1().max(1)) as u32 }
    }
    /// Exponent `j` with `x = g_layer^j`, or `None` for zero.
    pub fn layer_log(&self, x: FqElem) -> Option<u64> {
        x.top_log().map(|l| l / self.layers[x.layer()].step)
    }
    pub fn from_int(&self, layer: usize, v: i64) -> FqElem {
        let c = v.rem_euclid(self.p as i64) as u64;
        FqElem { layer: layer as u8, log: self.log_of[c as usize] }
    }
    /// Value of a prime-field element as an integer in `[0, p)`.
    pub fn to_int(&self, x: FqElem) -> Option<u64> {
        let code = self.code(x);
        (code < self.p).then_some(code)
    }

    /// Same value tagged with another layer (caller guarantees membership).
    pub fn retag(&self, x: FqElem, layer: usize) -> FqElem {
        debug_assert!(self.contains(layer, x));
        FqElem { layer: layer as u8, log: x.log }
    }

    /// Reinterprets `x` in another layer; fails unless `x` lies in it.
    pub fn embed(&self, x: FqElem, layer: usize) -> Result<FqElem> {
        if self.contains(layer, x) {
            Ok(FqElem { layer: layer as u8, log: x.log })
        } else {
            Err(Error::Domain(format!("{x:?} does not lie in layer {layer}")))
        }
    }
    /// Whether the top-field value of `x` lies in the given layer.
    pub fn contains(&self, layer: usize, x: FqElem) -> bool {
        x.is_zero() || (x.log as u64) % self.layers[layer].step == 0
    }

    fn code(&self, x: FqElem) -> u64 {
        if x.is_zero() {
            0
        } else {
            self.exp_code[x.log as usize] as u64
        }
    }

    /// Coordinates over `F_p` in the power basis of the layer generator.
    pub fn coefficients(&self, x: FqElem) -> Vec<u64> {
        let l = &self.layers[x.layer()];
        let d = l.degree as usize;
        let du = self.top_degree as usize;
        let p = self.p;
        // Columns: codes of g_l^i as vectors in F_p^D.
        let cols: Vec<Vec<u64>> = (0..d)
            .map(|i| code_to_poly(self.code(self.gen_pow(x.layer(), i as i64)), p, du))
            .collect();
        let rhs = code_to_poly(self.code(x), p, du);
        solve_mod_p(&cols, &rhs, p).expect("layer element lies in the span of its power basis")
    }
    pub fn from_coefficients(&self, layer: usize, coeffs: &[u64]) -> FqElem {
        let mut acc = self.zero(layer);
        for (i, &c) in coeffs.iter().enumerate() {
            let term = self.mul(self.from_int(layer, c as i64), self.gen_pow(layer, i as i64));
            acc = self.add(acc, term);
        }
        acc
    }

    pub fn common_layer(&self, a: FqElem, b: FqElem) -> u8 {
        if a.layer == b.layer {
            return a.layer;
        }
        let da = self.layers[a.layer()].degree;
        let db = self.layers[b.layer()].degree;
        let l = da / gcd(da as u64, db as u64) as u32 * db;
        self.layers
            .iter()
            .position(|x| x.degree % l == 0)
            .expect("the top layer contains everything") as u8
    }

    pub fn add(&self, a: FqElem, b: FqElem) -> FqElem {
        let layer = self.common_layer(a, b);
        if a.is_zero() {
            return FqElem { layer, log: b.log };
        }
        if b.is_zero() {
            return FqElem { layer, log: a.log };
        }
        let n1 = self.n1();
        let diff = (b.log as u64 + n1 - a.log as u64) % n1;
        let z = self.zech[diff as usize];
        if z == ZERO_LOG {
            FqElem { layer, log: ZERO_LOG }
        } else {
            FqElem { layer, log: ((a.log as u64 + z as u64) % n1) as u32 }
        }
    }
    pub fn neg(&self, a: FqElem) -> FqElem {
        if a.is_zero() || self.p == 2 {
            return a;
        }
        let n1 = self.n1();
        FqElem { layer: a.layer, log: ((a.log as u64 + n1 / 2) % n1) as u32 }
    }
    pub fn sub(&self, a: FqElem, b: FqElem) -> FqElem {
        self.add(a, self.neg(b))
    }
    pub fn mul(&self, a: FqElem, b: FqElem) -> FqElem {
        let layer = self.common_layer(a, b);
        if a.is_zero() || b.is_zero() {
            return FqElem { layer, log: ZERO_LOG };
        }
        FqElem { layer, log: ((a.log as u64 + b.log as u64) % self.n1()) as u32 }
    }
    pub fn inv(&self, a: FqElem) -> Result<FqElem> {
        if a.is_zero() {
            return Err(Error::Domain("inverse of zero".into()));
        }
        Ok(FqElem { layer: a.layer, log: ((self.n1() - a.log as u64) % self.n1()) as u32 })
    }
    pub fn pow(&self, a: FqElem, e: i128) -> FqElem {
        if a.is_zero() {
            return if e == 0 { self.one(a.layer()) } else { a };
        }
        let n1 = self.n1() as i128;
        let l = ((a.log as i128) * e.rem_euclid(n1)).rem_euclid(n1);
        FqElem { layer: a.layer, log: l as u32 }
    }
    pub fn scale_int(&self, a: FqElem, k: i64) -> FqElem {
        self.mul(a, self.from_int(a.layer(), k))
    }

    /// `x^{p^steps}`; negative steps invert Frobenius.
    pub fn frobenius(&self, x: FqElem, steps: i64) -> FqElem {
        if x.is_zero() {
            return x;
        }
        let d = self.layers[x.layer()].degree as i64;
        let s = steps.rem_euclid(d) as u32;
        let n1 = self.n1() as u128;
        let e = mod_pow(self.p as u128, s as u128, n1);
        FqElem { layer: x.layer, log: ((x.log as u128 * e) % n1) as u32 }
    }

    fn check_sublayer(&self, x: FqElem, sub: usize) -> Result<(u32, u32)> {
        let d = self.layers[x.layer()].degree;
        let s = self.layers[sub].degree;
        if d % s != 0 {
            return Err(Error::Domain(format!("layer degree {s} does not divide {d}")));
        }
        Ok((d, s))
    }

    /// Relative norm from the element's layer down to `sub`.
    pub fn norm_to(&self, x: FqElem, sub: usize) -> Result<FqElem> {
        let (d, s) = self.check_sublayer(x, sub)?;
        let qs = self.p.pow(s) as u128;
        let e = ((qs.pow(d / s)) - 1) / (qs - 1);
        let y = self.pow(x, e as i128);
        Ok(FqElem { layer: sub as u8, log: y.log })
    }

    /// Relative trace from the element's layer down to `sub`.
    pub fn trace_to(&self, x: FqElem, sub: usize) -> Result<FqElem> {
        let (d, s) = self.check_sublayer(x, sub)?;
        let mut acc = self.zero(sub);
        for i in 0..(d / s) {
            let c = self.frobenius(x, (s * i) as i64);
            acc = self.add(acc, FqElem { layer: sub as u8, log: c.log });
        }
        Ok(acc)
    }

    /// Quadratic character of the layer's multiplicative group.
    pub fn sgn(&self, x: FqElem) -> Result<i32> {
        if x.is_zero() {
            return Err(Error::Domain("sgn of zero".into()));
        }
        if self.p == 2 {
            return Err(Error::Domain("sgn needs odd characteristic".into()));
        }
        let j = self.layer_log(x).unwrap();
        Ok(if j % 2 == 0 { 1 } else { -1 })
    }

    /// Quadratic character of the (cyclic) kernel of `norm_to(·, sub)`.
    pub fn sgn_norm_one(&self, x: FqElem, sub: usize) -> Result<i32> {
        let n = self.norm_to(x, sub)?;
        if n != self.one(sub) {
            return Err(Error::Domain("argument is not of norm one".into()));
        }
        let big = self.layers[x.layer()].size;
        let small = self.layers[sub].size;
        let kernel = (big - 1) / (small - 1);
        if kernel % 2 != 0 {
            return Err(Error::Domain("norm-one group has odd order".into()));
        }
        // The kernel is generated by g_layer^{small-1}.
        let j = self.layer_log(x).unwrap();
        let k = j / (small - 1);
        Ok(if k % 2 == 0 { 1 } else { -1 })
    }

    pub fn norm_one_subgroup(&self, layer: usize, sub: usize) -> Result<Vec<FqElem>> {
        let d = self.layers[layer].degree;
        let s = self.layers[sub].degree;
        if d % s != 0 {
            return Err(Error::Domain(format!("layer degree {s} does not divide {d}")));
        }
        let small = self.layers[sub].size;
        let big = self.layers[layer].size;
        let kernel = (big - 1) / (small - 1);
        Ok((0..kernel).map(|k| self.gen_pow(layer, (k * (small - 1)) as i64)).collect())
    }

    /// Every element of a layer, zero first.
    pub fn elements(&self, layer: usize) -> Vec<FqElem> {
        let size = self.layers[layer].size;
        std::iter::once(self.zero(layer))
            .chain((0..size - 1).map(|j| self.gen_pow(layer, j as i64)))
            .collect()
    }

    /// Smallest layer containing `x` among divisor degrees of `x`'s layer.
    pub fn generated_degree(&self, x: FqElem) -> u32 {
        let d = self.layers[x.layer()].degree;
        for s in 1..=d {
            if d % s == 0 && self.frobenius_degree_fixes(x, s) {
                return s;
            }
        }
        d
    }
    fn frobenius_degree_fixes(&self, x: FqElem, s: u32) -> bool {
        if x.is_zero() {
            return true;
        }
        let n1 = self.n1() as u128;
        let e = mod_pow(self.p as u128, s as u128, n1);
        (x.log as u128 * e) % n1 == x.log as u128
    }

    /// Minimal polynomial of `x` over `F_p`, low degree first.
    pub fn minimal_polynomial(&self, x: FqElem) -> Vec<u64> {
        let s = self.generated_degree(x);
        // prod_{i<s} (X - x^{p^i}) computed with coefficients in the field.
        let layer = x.layer();
        let mut coeffs = vec![self.one(layer)];
        for i in 0..s {
            let root = self.frobenius(x, i as i64);
            let mut next = vec![self.zero(layer); coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k + 1] = self.add(next[k + 1], c);
                next[k] = self.sub(next[k], self.mul(c, root));
            }
            coeffs = next;
        }
        coeffs
            .iter()
            .map(|&c| self.to_int(c).expect("minimal polynomial has prime-field coefficients"))
            .collect()
    }

    /// Discrete log of `x` to the base `b` by baby-step/giant-step.
    pub fn discrete_log(&self, b: FqElem, x: FqElem) -> Option<u64> {
        if b.is_zero() || x.is_zero() {
            return None;
        }
        let n1 = self.n1();
        let ord = n1 / gcd(n1, b.log as u64);
        let m = (ord as f64).sqrt().ceil() as u64 + 1;
        let mut baby = std::collections::HashMap::with_capacity(m as usize);
        let mut cur = self.one(0);
        for j in 0..m {
            baby.entry(cur.log).or_insert(j);
            cur = self.mul(cur, b);
        }
        let giant = self.pow(b, -(m as i128));
        let mut y = x;
        for i in 0..=m {
            if let Some(&j) = baby.get(&y.log) {
                let e = (i * m + j) % ord;
                return Some(e);
            }
            y = self.mul(y, giant);
        }
        None
    }
}

pub fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Solves `Σ x_i col_i = rhs` over `F_p`; `None` if inconsistent.
pub fn solve_mod_p(cols: &[Vec<u64>], rhs: &[u64], p: u64) -> Option<Vec<u64>> {
    let rows = rhs.len();
    let n = cols.len();
    let mut a: Vec<Vec<u64>> = (0..rows)
        .map(|r| {
            let mut row: Vec<u64> = cols.iter().map(|c| c[r] % p).collect();
            row.push(rhs[r] % p);
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n {
        let Some(pr) = (r..rows).find(|&i| a[i][c] != 0) else { continue };
        a.swap(r, pr);
        let inv = mod_pow(a[r][c] as u128, (p - 2) as u128, p as u128) as u64;
        for v in a[r].iter_mut() {
            *v = *v * inv % p;
        }
        for i in 0..rows {
            if i != r && a[i][c] != 0 {
                let f = a[i][c];
                for k in 0..=n {
                    a[i][k] = (a[i][k] + p * p - f * a[r][k] % p) % p;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    if a.iter().skip(r).any(|row| row[n] != 0) {
        return None;
    }
    let mut x = vec![0u64; n];
    for (i, &c) in pivots.iter().enumerate() {
        x[c] = a[i][n];
    }
    Some(x)
}

/// Basis of `{x : Σ x_i col_i = 0}` over `F_p`.
pub fn nullspace_mod_p(cols: &[Vec<u64>], p: u64) -> Vec<Vec<u64>> {
    let n = cols.len();
    let rows = cols.first().map_or(0, |c| c.len());
    let mut a: Vec<Vec<u64>> =
        (0..rows).map(|r| cols.iter().map(|c| c[r] % p).collect()).collect();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..n {
        let Some(pr) = (r..rows).find(|&i| a[i][c] != 0) else { continue };
        a.swap(r, pr);
        let inv = mod_pow(a[r][c] as u128, (p - 2) as u128, p as u128) as u64;
        for v in a[r].iter_mut() {
            *v = *v * inv % p;
        }
        for i in 0..rows {
            if i != r && a[i][c] != 0 {
                let f = a[i][c];
                for k in 0..n {
                    a[i][k] = (a[i][k] + p * p - f * a[r][k] % p) % p;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut x = vec![0u64; n];
            x[f] = 1;
            for (i, &c) in pivots.iter().enumerate() {
                x[c] = (p - a[i][f]) % p;
            }
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f9() -> FieldTower {
        FieldTower::new(3, &[1, 2]).unwrap()
    }

    #[test]
    fn bundled_conway_entries_verify() {
        for &(p, c) in CONWAY {
            let d = (c.len() - 1) as u32;
            if (p as u128).pow(d) > MAX_FIELD_SIZE as u128 {
                continue;
            }
            assert!(is_irreducible(c, p), "p={p} {c:?}");
            let t = FieldTower::new(p, &divisors(d as u64).iter().map(|&x| x as u32).collect::<Vec<_>>())
                .unwrap();
            assert!(t.uses_conway(), "p={p} d={d} failed compatibility");
            assert_eq!(t.layer(t.layers().len() - 1).poly(), c);
        }
    }

    #[test]
    fn layer_polynomials_are_irreducible() {
        let t = FieldTower::new(5, &[1, 2, 4]).unwrap();
        for l in t.layers() {
            assert!(is_irreducible(l.poly(), 5));
            assert_eq!(l.poly().len() as u32, l.degree() + 1);
        }
    }

    #[test]
    fn frobenius_examples() {
        let t = f9();
        assert!(t.frobenius(t.zero(1), 3).is_zero());
        let two = t.from_int(1, 2);
        assert_eq!(t.frobenius(two, 1), two);
        let g = t.generator(1);
        assert_eq!(t.frobenius(g, 2), g);
        assert_ne!(t.frobenius(g, 1), g);
    }

    #[test]
    fn norm_examples() {
        let t = f9();
        for x in t.elements(1) {
            let n = t.norm_to(x, 0).unwrap();
            let direct = t.pow(x, 4);
            assert_eq!(n.top_log(), direct.top_log());
        }
        let t25 = FieldTower::new(5, &[1, 2]).unwrap();
        let n = t25.norm_to(t25.generator(1), 0).unwrap();
        let order = (1..=4).find(|&k| t25.pow(n, k) == t25.one(0)).unwrap();
        assert_eq!(order, 4);
        assert_eq!(t25.norm_one_subgroup(1, 0).unwrap().len(), 6);
    }

    #[test]
    fn sgn_examples() {
        let t = FieldTower::new(5, &[1]).unwrap();
        assert_eq!(t.sgn(t.one(0)).unwrap(), 1);
        assert_eq!(t.sgn(t.from_int(0, 2)).unwrap(), -1);
        assert_eq!(t.sgn(t.from_int(0, 4)).unwrap(), 1);
        assert_eq!(t.sgn(t.generator(0)).unwrap(), -1);
        assert!(t.sgn(t.zero(0)).is_err());
    }

    #[test]
    fn sgn_norm_one_examples() {
        let t = f9();
        let kernel = t.norm_one_subgroup(1, 0).unwrap();
        assert_eq!(kernel.len(), 4);
        let gen = kernel
            .iter()
            .copied()
            .find(|&x| (1..4).all(|k| t.pow(x, k) != t.one(1)))
            .unwrap();
        assert_eq!(t.sgn_norm_one(gen, 0).unwrap(), -1);
        assert_eq!(t.sgn_norm_one(t.mul(gen, gen), 0).unwrap(), 1);
        assert_eq!(t.sgn_norm_one(t.one(1), 0).unwrap(), 1);
        assert!(t.sgn_norm_one(t.generator(1), 0).is_err());
    }

    #[test]
    fn norm_one_sizes() {
        let t = FieldTower::new(5, &[1, 3]).unwrap();
        assert_eq!(t.norm_one_subgroup(1, 0).unwrap().len(), 31);
        assert_eq!(t.norm_one_subgroup(0, 0).unwrap(), vec![t.one(0)]);
        for x in t.norm_one_subgroup(1, 0).unwrap() {
            assert_eq!(t.norm_to(x, 0).unwrap(), t.one(0));
        }
    }

    #[test]
    fn trace_and_norm_match_conjugate_sums_exhaustively() {
        for (p, degs) in [(3u64, vec![1u32, 2, 4]), (5, vec![1, 2, 4]), (7, vec![1, 3])] {
            let t = FieldTower::new(p, &degs).unwrap();
            let top = t.layers().len() - 1;
            for sub in 0..t.layers().len() {
                let d = t.layer_degree(top);
                let s = t.layer_degree(sub);
                if d % s != 0 {
                    continue;
                }
                for x in t.elements(top) {
                    let mut sum = t.zero(top);
                    let mut prod = t.one(top);
                    for i in 0..d / s {
                        let c = t.frobenius(x, (i * s) as i64);
                        sum = t.add(sum, c);
                        prod = t.mul(prod, c);
                    }
                    assert_eq!(t.trace_to(x, sub).unwrap().top_log(), sum.top_log());
                    assert_eq!(t.norm_to(x, sub).unwrap().top_log(), prod.top_log());
                    assert!(t.contains(sub, sum) && t.contains(sub, prod));
                }
            }
        }
    }

    #[test]
    fn trace_of_sublayer_element_scales() {
        let t = FieldTower::new(5, &[1, 2, 4]).unwrap();
        for x in t.elements(1) {
            let y = t.embed(x, 2).unwrap();
            let tr = t.trace_to(y, 1).unwrap();
            assert_eq!(tr.top_log(), t.scale_int(x, 2).top_log());
        }
    }

    #[test]
    fn coefficients_round_trip() {
        let t = FieldTower::new(5, &[1, 2, 4]).unwrap();
        for layer in 0..3 {
            for x in t.elements(layer) {
                let c = t.coefficients(x);
                assert_eq!(c.len() as u32, t.layer_degree(layer));
                assert_eq!(c.iter().all(|&v| v == 0), x.is_zero());
                assert_eq!(t.from_coefficients(layer, &c), x);
            }
        }
    }

    #[test]
    fn discrete_log_agrees_with_table() {
        let t = FieldTower::new(5, &[1, 4]).unwrap();
        let g = t.generator(1);
        for x in t.elements(1).into_iter().skip(1).step_by(7) {
            let e = t.discrete_log(g, x).unwrap();
            assert_eq!(t.pow(g, e as i128), x);
        }
    }

    #[test]
    fn moebius_values() {
        assert_eq!(
            (1..=10).map(moebius).collect::<Vec<_>>(),
            vec![1, -1, -1, 0, -1, 1, -1, 0, 0, 1]
        );
    }

    #[test]
    fn frobenius_full_degree_is_identity() {
        let t = FieldTower::new(3, &[1, 3]).unwrap();
        for x in t.elements(1) {
            assert_eq!(t.frobenius(x, 3), x);
            assert_eq!(t.frobenius(t.frobenius(x, 1), 2), x);
        }
    }

    #[test]
    fn sgn_is_multiplicative() {
        let t = FieldTower::new(7, &[1, 2]).unwrap();
        let els: Vec<_> = t.elements(1).into_iter().skip(1).collect();
        for &a in els.iter().step_by(5) {
            for &b in els.iter().step_by(3) {
                let lhs = t.sgn(t.mul(a, b)).unwrap();
                assert_eq!(lhs, t.sgn(a).unwrap() * t.sgn(b).unwrap());
            }
        }
    }

    #[test]
    fn fallback_polynomial_is_lex_first() {
        let f = lex_first_irreducible(3, 2);
        assert_eq!(f, vec![1, 0, 1]);
    }
}
