//! RNS polynomials: a ring element represented by one residue component per
//! active modulus. A level-ℓ polynomial carries components for q_0…q_{ℓ−1};
//! the extended form adds the K auxiliary components used during key
//! switching.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::Zero;
use rand::Rng;

use crate::context::Context;
use crate::error::{Error, Result};
use crate::ntt::{ntt_forward, CoeffVector, Domain};

/// Polynomial over Q_ℓ = q_0…q_{ℓ−1}; `comps[j]` is the residue mod q_j.
/// All components share one domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsPoly {
    pub comps: Vec<CoeffVector>,
}

impl RnsPoly {
    pub fn zero(ctx: &Context, level: usize, domain: Domain) -> Result<RnsPoly> {
        ctx.level_basis(level)?;
        let comps = ctx.q[..level]
            .iter()
            .map(|m| CoeffVector::zero(m.clone(), domain))
            .collect();
        Ok(RnsPoly { comps })
    }

    pub fn level(&self) -> usize {
        self.comps.len()
    }

    pub fn domain(&self) -> Domain {
        let d = self.comps[0].domain;
        debug_assert!(self.comps.iter().all(|c| c.domain == d));
        d
    }

    pub fn ring_degree(&self) -> usize {
        self.comps[0].coeffs.len()
    }

    fn check_match(&self, other: &RnsPoly) -> Result<()> {
        if self.level() != other.level() {
            return Err(Error::LevelMismatch);
        }
        if self.domain() != other.domain() {
            return Err(Error::DomainMismatch {
                expected: self.domain().name(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &RnsPoly) -> Result<RnsPoly> {
        self.check_match(other)?;
        Ok(RnsPoly {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &RnsPoly) -> Result<RnsPoly> {
        self.check_match(other)?;
        Ok(RnsPoly {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.sub(b))
                .collect(),
        })
    }

    pub fn neg(&self) -> RnsPoly {
        RnsPoly {
            comps: self.comps.iter().map(|c| c.neg()).collect(),
        }
    }

    /// Pointwise ring product; both sides must be in the evaluation domain.
    pub fn mul_pointwise(&self, other: &RnsPoly) -> Result<RnsPoly> {
        self.check_match(other)?;
        if self.domain() != Domain::Evaluation {
            return Err(Error::DomainMismatch { expected: "evaluation" });
        }
        Ok(RnsPoly {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.mul_pointwise(b))
                .collect(),
        })
    }

    /// Multiplies component j by `scalars[j]` (a per-modulus constant).
    pub fn mul_scalar_per_comp(&self, scalars: &[u64]) -> RnsPoly {
        assert_eq!(scalars.len(), self.level());
        RnsPoly {
            comps: self
                .comps
                .iter()
                .zip(scalars)
                .map(|(c, &s)| c.mul_scalar(s))
                .collect(),
        }
    }

    /// Drops the top components, reducing the polynomial to a lower level.
    /// The represented value is reduced mod the smaller Q — callers use this
    /// to align operands that sit at different depths.
    pub fn truncate_level(&self, new_level: usize) -> Result<RnsPoly> {
        if new_level == 0 || new_level > self.level() {
            return Err(Error::LevelOutOfRange(new_level, self.level()));
        }
        Ok(RnsPoly {
            comps: self.comps[..new_level].to_vec(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }

    /// Lifts signed coefficients (|v| small) into every residue component.
    pub fn from_signed(
        ctx: &Context,
        level: usize,
        coeffs: &[i64],
        domain: Domain,
    ) -> Result<RnsPoly> {
        ctx.level_basis(level)?;
        if coeffs.len() != ctx.ring_degree {
            return Err(Error::Parameter(format!(
                "coefficient count {} does not match ring degree {}",
                coeffs.len(),
                ctx.ring_degree
            )));
        }
        let comps = ctx.q[..level]
            .iter()
            .map(|m| {
                let mut v = CoeffVector::from_coeffs(
                    coeffs.iter().map(|&c| m.reduce_i64(c)).collect(),
                    m.clone(),
                    Domain::Coefficient,
                );
                if domain == Domain::Evaluation {
                    ntt_forward(&mut v);
                }
                v
            })
            .collect();
        Ok(RnsPoly { comps })
    }

    /// Lifts arbitrary-precision coefficients (canonical or signed) into the
    /// residue components.
    pub fn from_big(
        ctx: &Context,
        level: usize,
        coeffs: &[BigInt],
        domain: Domain,
    ) -> Result<RnsPoly> {
        ctx.level_basis(level)?;
        if coeffs.len() != ctx.ring_degree {
            return Err(Error::Parameter(format!(
                "coefficient count {} does not match ring degree {}",
                coeffs.len(),
                ctx.ring_degree
            )));
        }
        let comps = ctx.q[..level]
            .iter()
            .map(|m| {
                let mv = BigInt::from(m.value);
                let mut v = CoeffVector::from_coeffs(
                    coeffs
                        .iter()
                        .map(|c| {
                            let mut r = c % &mv;
                            if r.sign() == Sign::Minus {
                                r += &mv;
                            }
                            r.to_biguint().unwrap().iter_u64_digits().next().unwrap_or(0)
                        })
                        .collect(),
                    m.clone(),
                    Domain::Coefficient,
                );
                if domain == Domain::Evaluation {
                    ntt_forward(&mut v);
                }
                v
            })
            .collect();
        Ok(RnsPoly { comps })
    }

    /// Residues of each component as rows, for CRT reconstruction.
    pub fn residue_rows(&self) -> Vec<&[u64]> {
        self.comps.iter().map(|c| c.coeffs.as_slice()).collect()
    }

    pub fn random_uniform<R: Rng>(
        ctx: &Context,
        level: usize,
        domain: Domain,
        rng: &mut R,
    ) -> Result<RnsPoly> {
        ctx.level_basis(level)?;
        let comps = ctx.q[..level]
            .iter()
            .map(|m| {
                CoeffVector::from_coeffs(
                    (0..ctx.ring_degree).map(|_| rng.gen_range(0..m.value)).collect(),
                    m.clone(),
                    domain,
                )
            })
            .collect();
        Ok(RnsPoly { comps })
    }
}

/// Polynomial over the extended basis P ∪ Q_ℓ. Component i < K lives mod
/// p_i; the remaining ℓ components mirror an [`RnsPoly`] over Q_ℓ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedPoly {
    pub p: Vec<CoeffVector>,
    pub q: Vec<CoeffVector>,
}

impl ExtendedPoly {
    pub fn level(&self) -> usize {
        self.q.len()
    }

    pub fn domain(&self) -> Domain {
        let d = if self.p.is_empty() { self.q[0].domain } else { self.p[0].domain };
        debug_assert!(self.p.iter().chain(&self.q).all(|c| c.domain == d));
        d
    }

    fn check_match(&self, other: &ExtendedPoly) -> Result<()> {
        if self.level() != other.level() || self.p.len() != other.p.len() {
            return Err(Error::LevelMismatch);
        }
        if self.domain() != other.domain() {
            return Err(Error::DomainMismatch {
                expected: self.domain().name(),
            });
        }
        Ok(())
    }

    pub fn zero_like(&self) -> ExtendedPoly {
        ExtendedPoly {
            p: self
                .p
                .iter()
                .map(|c| CoeffVector::zero(c.modulus.clone(), c.domain))
                .collect(),
            q: self
                .q
                .iter()
                .map(|c| CoeffVector::zero(c.modulus.clone(), c.domain))
                .collect(),
        }
    }

    pub fn add(&self, other: &ExtendedPoly) -> Result<ExtendedPoly> {
        self.check_match(other)?;
        Ok(ExtendedPoly {
            p: self.p.iter().zip(&other.p).map(|(a, b)| a.add(b)).collect(),
            q: self.q.iter().zip(&other.q).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &ExtendedPoly) -> Result<()> {
        self.check_match(other)?;
        for (a, b) in self.p.iter_mut().zip(&other.p) {
            a.add_assign(b);
        }
        for (a, b) in self.q.iter_mut().zip(&other.q) {
            a.add_assign(b);
        }
        Ok(())
    }

    pub fn mul_pointwise(&self, other: &ExtendedPoly) -> Result<ExtendedPoly> {
        self.check_match(other)?;
        if self.domain() != Domain::Evaluation {
            return Err(Error::DomainMismatch { expected: "evaluation" });
        }
        Ok(ExtendedPoly {
            p: self
                .p
                .iter()
                .zip(&other.p)
                .map(|(a, b)| a.mul_pointwise(b))
                .collect(),
            q: self
                .q
                .iter()
                .zip(&other.q)
                .map(|(a, b)| a.mul_pointwise(b))
                .collect(),
        })
    }
}

/// Centered per-coefficient values of a level-ℓ polynomial (coefficient
/// domain required).
pub fn to_centered_big(ctx: &Context, poly: &RnsPoly) -> Result<Vec<BigInt>> {
    if poly.domain() != Domain::Coefficient {
        return Err(Error::DomainMismatch { expected: "coefficient" });
    }
    let rows = poly.residue_rows();
    Ok(crate::oracle::crt_reconstruct_poly(
        &rows,
        &ctx.q[..poly.level()],
    ))
}

/// Canonical (non-negative) per-coefficient values mod Q_ℓ.
pub fn to_canonical_big(ctx: &Context, poly: &RnsPoly) -> Result<Vec<BigUint>> {
    let centered = to_centered_big(ctx, poly)?;
    let q = ctx.q_product(poly.level());
    let qi = BigInt::from_biguint(Sign::Plus, q.clone());
    Ok(centered
        .into_iter()
        .map(|c| {
            let r = if c.sign() == Sign::Minus { c + &qi } else { c };
            debug_assert!(!r.is_zero() || true);
            r.to_biguint().unwrap()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::build_context;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn ctx() -> Context {
        build_context(1 << 5, 4, 4, 50, 50, 45, 3.2, 8, 1).unwrap()
    }

    #[test]
    fn signed_lift_roundtrips_through_crt() {
        let ctx = ctx();
        let mut coeffs = vec![0i64; 32];
        coeffs[0] = -7;
        coeffs[1] = 123456;
        coeffs[31] = -98765;
        let poly = RnsPoly::from_signed(&ctx, 3, &coeffs, Domain::Coefficient).unwrap();
        let back = to_centered_big(&ctx, &poly).unwrap();
        for (b, &c) in back.iter().zip(&coeffs) {
            assert_eq!(*b, BigInt::from(c));
        }
    }

    #[test]
    fn arithmetic_matches_big_integer_arithmetic() {
        let ctx = ctx();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let a = RnsPoly::random_uniform(&ctx, 4, Domain::Coefficient, &mut rng).unwrap();
        let b = RnsPoly::random_uniform(&ctx, 4, Domain::Coefficient, &mut rng).unwrap();
        let q = ctx.q_product(4);
        let sum = a.add(&b).unwrap();
        let ga = to_canonical_big(&ctx, &a).unwrap();
        let gb = to_canonical_big(&ctx, &b).unwrap();
        let gs = to_canonical_big(&ctx, &sum).unwrap();
        for i in 0..32 {
            assert_eq!(gs[i], (&ga[i] + &gb[i]) % &q);
        }
        let diff = a.sub(&b).unwrap();
        let gd = to_canonical_big(&ctx, &diff).unwrap();
        for i in 0..32 {
            assert_eq!(gd[i], (&ga[i] + &q - &gb[i]) % &q);
        }
    }

    #[test]
    fn pointwise_product_is_the_ring_product() {
        let ctx = ctx();
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let mut small = vec![0i64; 32];
        let mut small2 = vec![0i64; 32];
        for i in 0..32 {
            small[i] = (rng.gen_range(0..200i64)) - 100;
            small2[i] = (rng.gen_range(0..200i64)) - 100;
        }
        let a = RnsPoly::from_signed(&ctx, 2, &small, Domain::Evaluation).unwrap();
        let b = RnsPoly::from_signed(&ctx, 2, &small2, Domain::Evaluation).unwrap();
        let mut prod = a.mul_pointwise(&b).unwrap();
        for c in &mut prod.comps {
            crate::ntt::ntt_inverse(c);
        }
        let got = to_centered_big(&ctx, &prod).unwrap();
        let ea: Vec<BigInt> = small.iter().map(|&c| BigInt::from(c)).collect();
        let eb: Vec<BigInt> = small2.iter().map(|&c| BigInt::from(c)).collect();
        let expect = crate::oracle::negacyclic_mul_exact(&ea, &eb);
        assert_eq!(got, expect); // products are tiny vs Q_2, no wraparound
    }

    #[test]
    fn truncation_reduces_the_representable_value() {
        let ctx = ctx();
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let a = RnsPoly::random_uniform(&ctx, 4, Domain::Coefficient, &mut rng).unwrap();
        let t = a.truncate_level(2).unwrap();
        assert_eq!(t.level(), 2);
        let ga = to_canonical_big(&ctx, &a).unwrap();
        let gt = to_canonical_big(&ctx, &t).unwrap();
        let q2 = ctx.q_product(2);
        for i in 0..32 {
            assert_eq!(gt[i], &ga[i] % &q2);
        }
        assert!(a.truncate_level(0).is_err());
        assert!(a.truncate_level(5).is_err());
    }

    #[test]
    fn mismatched_operands_are_rejected() {
        let ctx = ctx();
        let a = RnsPoly::zero(&ctx, 3, Domain::Coefficient).unwrap();
        let b = RnsPoly::zero(&ctx, 2, Domain::Coefficient).unwrap();
        assert!(matches!(a.add(&b), Err(Error::LevelMismatch)));
        let c = RnsPoly::zero(&ctx, 3, Domain::Evaluation).unwrap();
        assert!(matches!(a.add(&c), Err(Error::DomainMismatch { .. })));
        assert!(matches!(
            a.mul_pointwise(&a),
            Err(Error::DomainMismatch { .. })
        ));
    }
}
