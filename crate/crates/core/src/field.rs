//! Binary extension field arithmetic and the linear algebra used by random
//! linear network coding: inner products, rank, Gaussian-elimination decoding
//! and uniformly random recombination of a node's known packets.
//!
//! Field elements are carried as `u16` regardless of the field; for GF(2)
//! only the low bit is used and for GF(2^8) only the low byte.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A field element of GF(2^m), m <= 16.
pub type Elem = u16;

/// x^8 + x^4 + x^3 + x + 1
pub const POLY_GF256: u32 = 0x11b;
/// x^16 + x^12 + x^3 + x + 1
pub const POLY_GF65536: u32 = 0x1100b;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("unsupported field GF(2^{0}); expected m in {{1, 8, 16}}")]
    UnsupportedDegree(u32),
    #[error("reduction polynomial {poly:#x} is not irreducible of degree {m}")]
    Reducible { m: u32, poly: u32 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("payload length {0} is odd; GF(2^16) combines byte pairs")]
    OddPayload(usize),
    #[error("not decodable: rank {rank} < {k}")]
    NotDecodable { rank: usize, k: usize },
}

/// Which GF(2^m) the coded packets live in.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FieldSpec {
    m: u32,
    poly: u32,
}

impl FieldSpec {
    pub const GF2: FieldSpec = FieldSpec { m: 1, poly: 0b11 };
    pub const GF256: FieldSpec = FieldSpec {
        m: 8,
        poly: POLY_GF256,
    };
    pub const GF65536: FieldSpec = FieldSpec {
        m: 16,
        poly: POLY_GF65536,
    };

    pub fn new(m: u32) -> Result<Self, FieldError> {
        let spec = match m {
            1 => Self::GF2,
            8 => Self::GF256,
            16 => Self::GF65536,
            other => return Err(FieldError::UnsupportedDegree(other)),
        };
        if m > 1 && !is_irreducible(spec.poly) {
            return Err(FieldError::Reducible { m, poly: spec.poly });
        }
        Ok(spec)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn polynomial(&self) -> u32 {
        self.poly
    }

    /// Number of field elements, q = 2^m.
    pub fn order(&self) -> u32 {
        1 << self.m
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        match self.m {
            1 => a & b & 1,
            _ => {
                if a == 0 || b == 0 {
                    return 0;
                }
                let t = self.tables();
                t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
            }
        }
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: Elem) -> Option<Elem> {
        if a == 0 {
            return None;
        }
        match self.m {
            1 => Some(1),
            _ => {
                let t = self.tables();
                let l = t.log[a as usize] as usize;
                Some(t.exp[(t.group_order - l) % t.group_order])
            }
        }
    }

    /// A uniformly random element.
    pub fn random_elem<R: Rng + ?Sized>(&self, rng: &mut R) -> Elem {
        match self.m {
            1 => rng.gen::<bool>() as Elem,
            8 => rng.gen::<u8>() as Elem,
            _ => rng.gen::<u16>(),
        }
    }

    /// Checks a payload length can be split into field symbols.
    pub fn check_payload_len(&self, len: usize) -> Result<(), FieldError> {
        if self.m == 16 && !len.is_multiple_of(2) {
            return Err(FieldError::OddPayload(len));
        }
        Ok(())
    }

    /// `dst += c * src`, symbol by symbol.
    pub fn axpy(&self, dst: &mut [u8], c: Elem, src: &[u8]) {
        debug_assert_eq!(dst.len(), src.len());
        if c == 0 {
            return;
        }
        match self.m {
            1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
            8 => {
                let t = self.tables();
                let lc = t.log[c as usize] as usize;
                for (d, &s) in dst.iter_mut().zip(src) {
                    if s != 0 {
                        *d ^= t.exp[lc + t.log[s as usize] as usize] as u8;
                    }
                }
            }
            _ => {
                for (d, s) in dst.chunks_exact_mut(2).zip(src.chunks_exact(2)) {
                    let x = u16::from_be_bytes([s[0], s[1]]);
                    let y = u16::from_be_bytes([d[0], d[1]]) ^ self.mul(c, x);
                    d.copy_from_slice(&y.to_be_bytes());
                }
            }
        }
    }

    /// `buf *= c`, symbol by symbol.
    pub fn scale(&self, buf: &mut [u8], c: Elem) {
        match self.m {
            1 => {
                if c & 1 == 0 {
                    buf.fill(0);
                }
            }
            8 => buf
                .iter_mut()
                .for_each(|b| *b = self.mul(c, *b as Elem) as u8),
            _ => {
                for d in buf.chunks_exact_mut(2) {
                    let y = self.mul(c, u16::from_be_bytes([d[0], d[1]]));
                    d.copy_from_slice(&y.to_be_bytes());
                }
            }
        }
    }

    fn tables(&self) -> &'static Tables {
        static GF256: OnceLock<Tables> = OnceLock::new();
        static GF65536: OnceLock<Tables> = OnceLock::new();
        match self.m {
            8 => GF256.get_or_init(|| Tables::build(8, POLY_GF256)),
            16 => GF65536.get_or_init(|| Tables::build(16, POLY_GF65536)),
            _ => unreachable!("no tables for GF(2^{})", self.m),
        }
    }
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{})", self.m)
    }
}

impl TryFrom<u32> for FieldSpec {
    type Error = FieldError;
    fn try_from(m: u32) -> Result<Self, FieldError> {
        FieldSpec::new(m)
    }
}

impl From<FieldSpec> for u32 {
    fn from(f: FieldSpec) -> u32 {
        f.m
    }
}

struct Tables {
    group_order: usize,
    log: Vec<u32>,
    // doubled so log a + log b never needs a reduction
    exp: Vec<Elem>,
}

impl Tables {
    fn build(m: u32, poly: u32) -> Tables {
        let q = 1usize << m;
        let group_order = q - 1;
        // x is not primitive for every polynomial (it is not for 0x11b), so
        // search for a generator.
        let generator = (2..q as u32)
            .find(|&g| multiplicative_order(g, poly, m) == group_order)
            .expect("an irreducible polynomial yields a cyclic multiplicative group");
        let mut log = vec![0u32; q];
        let mut exp = vec![0 as Elem; 2 * group_order];
        let mut x = 1u32;
        for i in 0..group_order {
            exp[i] = x as Elem;
            exp[i + group_order] = x as Elem;
            log[x as usize] = i as u32;
            x = clmul_reduce(x, generator, poly, m);
        }
        Tables {
            group_order,
            log,
            exp,
        }
    }
}

fn multiplicative_order(g: u32, poly: u32, m: u32) -> usize {
    let mut x = g;
    let mut order = 1;
    while x != 1 {
        x = clmul_reduce(x, g, poly, m);
        order += 1;
        if order > (1 << m) {
            return 0;
        }
    }
    order
}

/// Shift-and-add multiplication modulo `poly`; used only to build the tables.
fn clmul_reduce(a: u32, b: u32, poly: u32, m: u32) -> u32 {
    let mut acc = 0u32;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a >> m & 1 == 1 {
            a ^= poly;
        }
    }
    acc
}

fn poly_degree(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

fn poly_rem(mut a: u64, b: u64) -> u64 {
    let db = poly_degree(b);
    while a != 0 && poly_degree(a) >= db {
        a ^= b << (poly_degree(a) - db);
    }
    a
}

/// Trial division by every polynomial of degree 1..=deg/2.
pub fn is_irreducible(poly: u32) -> bool {
    let p = poly as u64;
    let d = poly_degree(p);
    if d < 1 {
        return false;
    }
    let max_div = 1u64 << (d / 2 + 1);
    (2..max_div).all(|q| poly_rem(p, q) != 0)
}

/// A length-k vector of coefficients over GF(2^m).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoefficientVector(pub Vec<Elem>);

impl CoefficientVector {
    pub fn zero(k: usize) -> Self {
        CoefficientVector(vec![0; k])
    }

    /// The unit vector e_j (0-based position `j`).
    pub fn unit(k: usize, j: usize) -> Self {
        let mut v = Self::zero(k);
        v.0[j] = 1;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    pub fn entries(&self) -> &[Elem] {
        &self.0
    }

    /// Elementwise sum (XOR).
    pub fn add(&self, other: &Self) -> Self {
        CoefficientVector(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }
}

/// A fixed-size message body.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Payload(pub Vec<u8>);

impl Payload {
    pub fn zero(len: usize) -> Self {
        Payload(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Payload(")?;
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Inner product; zero means `u` is perpendicular to `v`.
pub fn dot(
    spec: &FieldSpec,
    u: &CoefficientVector,
    v: &CoefficientVector,
) -> Result<Elem, FieldError> {
    if u.len() != v.len() {
        return Err(FieldError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(u.0
        .iter()
        .zip(&v.0)
        .fold(0, |acc, (&a, &b)| acc ^ spec.mul(a, b)))
}

/// Incrementally maintained reduced row-echelon basis of coefficient vectors.
///
/// Rows are kept fully reduced: every pivot column is zero in all other rows
/// and every pivot is 1.
#[derive(Clone, Debug)]
pub struct EchelonBasis {
    spec: FieldSpec,
    k: usize,
    rows: Vec<Vec<Elem>>,
    pivots: Vec<usize>,
}

impl EchelonBasis {
    pub fn new(spec: FieldSpec, k: usize) -> Self {
        EchelonBasis {
            spec,
            k,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.k
    }

    /// Reduces `v` against the basis and returns the residual.
    fn reduce(&self, v: &[Elem]) -> Vec<Elem> {
        let mut r = v.to_vec();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let c = r[p];
            if c != 0 {
                for (x, &y) in r.iter_mut().zip(row) {
                    *x ^= self.spec.mul(c, y);
                }
            }
        }
        r
    }

    /// Would `v` increase the rank?
    pub fn is_innovative(&self, v: &CoefficientVector) -> bool {
        self.reduce(&v.0).iter().any(|&x| x != 0)
    }

    /// Adds `v`; returns whether the rank grew.
    pub fn insert(&mut self, v: &CoefficientVector) -> Result<bool, FieldError> {
        if v.len() != self.k {
            return Err(FieldError::LengthMismatch {
                left: v.len(),
                right: self.k,
            });
        }
        let mut r = self.reduce(&v.0);
        let Some(p) = r.iter().position(|&x| x != 0) else {
            return Ok(false);
        };
        let inv = self.spec.inv(r[p]).expect("nonzero pivot");
        r.iter_mut().for_each(|x| *x = self.spec.mul(inv, *x));
        for row in &mut self.rows {
            let c = row[p];
            if c != 0 {
                for (x, &y) in row.iter_mut().zip(&r) {
                    *x ^= self.spec.mul(c, y);
                }
            }
        }
        self.rows.push(r);
        self.pivots.push(p);
        Ok(true)
    }
}

/// Dimension of the span of `vectors`.
pub fn rank(spec: &FieldSpec, vectors: &[CoefficientVector]) -> usize {
    let Some(first) = vectors.first() else {
        return 0;
    };
    let mut basis = EchelonBasis::new(*spec, first.len());
    for v in vectors {
        if basis.insert(v).is_err() {
            // mixed lengths cannot share a span; count what is consistent
            continue;
        }
        if basis.is_full() {
            break;
        }
    }
    basis.rank()
}

/// Recovers the k original messages by Gauss-Jordan elimination over the
/// coefficient rows, carrying the payloads along.
pub fn decode(
    spec: &FieldSpec,
    packets: &[(CoefficientVector, Payload)],
    k: usize,
) -> Result<Vec<Payload>, FieldError> {
    let Some((_, first)) = packets.first() else {
        return Err(FieldError::NotDecodable { rank: 0, k });
    };
    let plen = first.len();
    spec.check_payload_len(plen)?;
    let mut rows: Vec<(Vec<Elem>, Vec<u8>)> = Vec::with_capacity(packets.len());
    for (c, p) in packets {
        if c.len() != k {
            return Err(FieldError::LengthMismatch {
                left: c.len(),
                right: k,
            });
        }
        if p.len() != plen {
            return Err(FieldError::LengthMismatch {
                left: p.len(),
                right: plen,
            });
        }
        rows.push((c.0.clone(), p.0.clone()));
    }

    let mut rank = 0;
    for col in 0..k {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r].0[col] != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = spec.inv(rows[rank].0[col]).expect("nonzero pivot");
        {
            let (c, p) = &mut rows[rank];
            c.iter_mut().for_each(|x| *x = spec.mul(inv, *x));
            spec.scale(p, inv);
        }
        let (pc, pp) = rows[rank].clone();
        for (r, (c, p)) in rows.iter_mut().enumerate() {
            if r == rank || c[col] == 0 {
                continue;
            }
            let f = c[col];
            for (x, &y) in c.iter_mut().zip(&pc) {
                *x ^= spec.mul(f, y);
            }
            spec.axpy(p, f, &pp);
        }
        rank += 1;
    }
    if rank < k {
        return Err(FieldError::NotDecodable { rank, k });
    }
    Ok(rows.into_iter().take(k).map(|(_, p)| Payload(p)).collect())
}

/// Encodes `messages` under the coefficient vector `coeffs`.
pub fn combine(spec: &FieldSpec, coeffs: &CoefficientVector, messages: &[Payload]) -> Payload {
    let plen = messages.first().map_or(0, Payload::len);
    let mut out = vec![0u8; plen];
    for (&c, m) in coeffs.0.iter().zip(messages) {
        spec.axpy(&mut out, c, &m.0);
    }
    Payload(out)
}

/// A uniformly random linear combination of `basis`, one independent
/// coefficient per basis element. The empty basis yields the zero packet.
pub fn random_combination<R: Rng + ?Sized>(
    rng: &mut R,
    basis: &[(CoefficientVector, Payload)],
    spec: &FieldSpec,
    k: usize,
    payload_len: usize,
) -> (CoefficientVector, Payload) {
    let mut coeffs = vec![0 as Elem; k];
    let mut payload = vec![0u8; payload_len];
    for (v, p) in basis {
        let c = spec.random_elem(rng);
        if c == 0 {
            continue;
        }
        for (x, &y) in coeffs.iter_mut().zip(&v.0) {
            *x ^= spec.mul(c, y);
        }
        spec.axpy(&mut payload, c, &p.0);
    }
    (CoefficientVector(coeffs), Payload(payload))
}
