//! Negacyclic number-theoretic transform over a single word-sized prime.
//!
//! Polynomials live in Z_p[X]/(X^N + 1). The forward transform evaluates at
//! the N primitive 2N-th roots of unity; outputs (and the inputs of the
//! inverse) use the transform-internal bit-reversed ordering, which is
//! consistent across every modulus of a context, so pointwise operations
//! between evaluation-domain vectors are always aligned.

use std::sync::Arc;

use crate::zq::Modulus;

/// Representation of a polynomial component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Coefficients of X^0 .. X^{N-1}.
    Coefficient,
    /// Values at the primitive 2N-th roots, bit-reversed ordering.
    Evaluation,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Coefficient => "coefficient",
            Domain::Evaluation => "evaluation",
        }
    }
}

/// One residue component: N values mod a single prime, tagged with the
/// domain they currently represent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffVector {
    pub coeffs: Vec<u64>,
    pub modulus: Arc<Modulus>,
    pub domain: Domain,
}

impl CoeffVector {
    pub fn zero(modulus: Arc<Modulus>, domain: Domain) -> Self {
        let n = modulus.ring_degree;
        CoeffVector { coeffs: vec![0; n], modulus, domain }
    }

    pub fn from_coeffs(coeffs: Vec<u64>, modulus: Arc<Modulus>, domain: Domain) -> Self {
        assert_eq!(coeffs.len(), modulus.ring_degree);
        debug_assert!(coeffs.iter().all(|&c| c < modulus.value));
        CoeffVector { coeffs, modulus, domain }
    }

    #[inline]
    fn assert_compatible(&self, other: &CoeffVector) {
        assert_eq!(
            self.modulus.value, other.modulus.value,
            "components belong to different moduli"
        );
        assert_eq!(self.domain, other.domain, "components are in different domains");
    }

    /// Elementwise sum; valid in either domain (the transform is linear).
    pub fn add(&self, other: &CoeffVector) -> CoeffVector {
        self.assert_compatible(other);
        let m = &self.modulus;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| m.add(a, b))
            .collect();
        CoeffVector { coeffs, modulus: self.modulus.clone(), domain: self.domain }
    }

    pub fn sub(&self, other: &CoeffVector) -> CoeffVector {
        self.assert_compatible(other);
        let m = &self.modulus;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| m.sub(a, b))
            .collect();
        CoeffVector { coeffs, modulus: self.modulus.clone(), domain: self.domain }
    }

    pub fn add_assign(&mut self, other: &CoeffVector) {
        self.assert_compatible(other);
        let m = self.modulus.clone();
        for (a, &b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a = m.add(*a, b);
        }
    }

    pub fn sub_assign(&mut self, other: &CoeffVector) {
        self.assert_compatible(other);
        let m = self.modulus.clone();
        for (a, &b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a = m.sub(*a, b);
        }
    }

    /// Pointwise product — the ring product when both sides are in the
    /// evaluation domain.
    pub fn mul_pointwise(&self, other: &CoeffVector) -> CoeffVector {
        self.assert_compatible(other);
        let m = &self.modulus;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| m.mul(a, b))
            .collect();
        CoeffVector { coeffs, modulus: self.modulus.clone(), domain: self.domain }
    }

    /// Multiplication by a scalar residue; valid in either domain.
    pub fn mul_scalar(&self, s: u64) -> CoeffVector {
        let m = &self.modulus;
        let s = m.reduce_u64(s);
        let coeffs = self.coeffs.iter().map(|&a| m.mul(a, s)).collect();
        CoeffVector { coeffs, modulus: self.modulus.clone(), domain: self.domain }
    }

    pub fn mul_scalar_assign(&mut self, s: u64) {
        let m = self.modulus.clone();
        let s = m.reduce_u64(s);
        for a in &mut self.coeffs {
            *a = m.mul(*a, s);
        }
    }

    pub fn neg(&self) -> CoeffVector {
        let m = &self.modulus;
        let coeffs = self.coeffs.iter().map(|&a| m.neg(a)).collect();
        CoeffVector { coeffs, modulus: self.modulus.clone(), domain: self.domain }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

/// In-place forward transform (decimation in time, Cooley–Tukey butterflies,
/// twiddles folded with powers of psi so the negacyclic wrap is free).
pub fn ntt_in_place(m: &Modulus, a: &mut [u64]) {
    let n = a.len();
    debug_assert_eq!(n, m.ring_degree);
    let psi_rev = &m.psi_rev;
    let mut t = n;
    let mut len = 1;
    while len < n {
        t /= 2;
        for i in 0..len {
            let j1 = 2 * i * t;
            let s = psi_rev[len + i];
            for j in j1..j1 + t {
                let u = a[j];
                let v = m.mul(a[j + t], s);
                a[j] = m.add(u, v);
                a[j + t] = m.sub(u, v);
            }
        }
        len *= 2;
    }
}

/// In-place inverse transform (Gentleman–Sande), including the 1/N scaling.
pub fn intt_in_place(m: &Modulus, a: &mut [u64]) {
    let n = a.len();
    debug_assert_eq!(n, m.ring_degree);
    let psi_inv_rev = &m.psi_inv_rev;
    let mut t = 1;
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        let mut j1 = 0;
        for i in 0..half {
            let s = psi_inv_rev[half + i];
            for j in j1..j1 + t {
                let u = a[j];
                let v = a[j + t];
                a[j] = m.add(u, v);
                a[j + t] = m.mul(m.sub(u, v), s);
            }
            j1 += 2 * t;
        }
        t *= 2;
        len = half;
    }
    for x in a.iter_mut() {
        *x = m.mul(*x, m.n_inv);
    }
}

/// Coefficient → evaluation, in place.
pub fn ntt_forward(v: &mut CoeffVector) {
    assert_eq!(v.domain, Domain::Coefficient, "forward transform needs coefficient input");
    let m = v.modulus.clone();
    ntt_in_place(&m, &mut v.coeffs);
    v.domain = Domain::Evaluation;
}

/// Evaluation → coefficient, in place.
pub fn ntt_inverse(v: &mut CoeffVector) {
    assert_eq!(v.domain, Domain::Evaluation, "inverse transform needs evaluation input");
    let m = v.modulus.clone();
    intt_in_place(&m, &mut v.coeffs);
    v.domain = Domain::Coefficient;
}

/// Direct O(N²) product in Z_p[X]/(X^N + 1); reference for the transforms.
pub fn negacyclic_mul_schoolbook(m: &Modulus, a: &[u64], b: &[u64]) -> Vec<u64> {
    let n = a.len();
    assert_eq!(b.len(), n);
    let mut out = vec![0u64; n];
    for i in 0..n {
        if a[i] == 0 {
            continue;
        }
        for j in 0..n {
            let prod = m.mul(a[i], b[j]);
            let k = i + j;
            if k < n {
                out[k] = m.add(out[k], prod);
            } else {
                out[k - n] = m.sub(out[k - n], prod);
            }
        }
    }
    out
}
