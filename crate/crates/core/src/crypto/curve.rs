//! Affine short-Weierstrass arithmetic over arbitrary-precision integers.
//!
//! Slow but parameterizable: used for small test curves and as an
//! independent cross-check of the optimized P-256 group in [`super::group`].

use num_bigint::BigUint;
use num_traits::Zero;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Point {
    Identity,
    Affine { x: BigUint, y: BigUint },
}

impl Point {
    pub fn affine(x: u64, y: u64) -> Self {
        Point::Affine {
            x: BigUint::from(x),
            y: BigUint::from(y),
        }
    }
}

/// `y² = x³ + ax + b` over `F_p` with base point `g` of order `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurveParams {
    pub p: BigUint,
    pub a: BigUint,
    pub b: BigUint,
    pub g: Point,
    pub n: BigUint,
}

fn hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant")
}

impl CurveParams {
    /// `y² = x³ + 2x + 2 mod 17`, generator `(5, 1)` of order 19.
    pub fn toy() -> Self {
        Self {
            p: 17u32.into(),
            a: 2u32.into(),
            b: 2u32.into(),
            g: Point::affine(5, 1),
            n: 19u32.into(),
        }
    }

    /// NIST P-256 (secp256r1).
    pub fn p256() -> Self {
        Self {
            p: hex("ffffffff00000001000000000000000000000000ffffffffffffffffffffffff"),
            a: hex("ffffffff00000001000000000000000000000000fffffffffffffffffffffffc"),
            b: hex("5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"),
            g: Point::Affine {
                x: hex("6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"),
                y: hex("4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5"),
            },
            n: hex("ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551"),
        }
    }

    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        ((a % &self.p) + &self.p - (b % &self.p)) % &self.p
    }

    fn inv(&self, a: &BigUint) -> BigUint {
        a.modpow(&(&self.p - 2u32), &self.p)
    }

    /// Nonsingular (`4a³ + 27b² ≠ 0`), generator on the curve, and `n·G = O`.
    pub fn is_valid(&self) -> bool {
        let disc = (BigUint::from(4u32) * self.a.modpow(&3u32.into(), &self.p)
            + BigUint::from(27u32) * self.b.modpow(&2u32.into(), &self.p))
            % &self.p;
        !disc.is_zero()
            && self.g != Point::Identity
            && self.contains(&self.g)
            && self.mul(&self.n, &self.g) == Point::Identity
    }

    pub fn contains(&self, pt: &Point) -> bool {
        match pt {
            Point::Identity => true,
            Point::Affine { x, y } => {
                if x >= &self.p || y >= &self.p {
                    return false;
                }
                let lhs = (y * y) % &self.p;
                let rhs = (x * x * x + &self.a * x + &self.b) % &self.p;
                lhs == rhs
            }
        }
    }

    pub fn neg(&self, pt: &Point) -> Point {
        match pt {
            Point::Identity => Point::Identity,
            Point::Affine { x, y } => Point::Affine {
                x: x.clone(),
                y: self.sub(&BigUint::zero(), y),
            },
        }
    }

    pub fn add(&self, p1: &Point, p2: &Point) -> Point {
        let (x1, y1, x2, y2) = match (p1, p2) {
            (Point::Identity, q) | (q, Point::Identity) => return q.clone(),
            (Point::Affine { x: x1, y: y1 }, Point::Affine { x: x2, y: y2 }) => (x1, y1, x2, y2),
        };
        let lambda = if x1 == x2 {
            if (y1 + y2) % &self.p == BigUint::zero() {
                return Point::Identity;
            }
            // tangent: (3x² + a) / 2y
            let num = (BigUint::from(3u32) * x1 * x1 + &self.a) % &self.p;
            num * self.inv(&((BigUint::from(2u32) * y1) % &self.p)) % &self.p
        } else {
            self.sub(y2, y1) * self.inv(&self.sub(x2, x1)) % &self.p
        };
        let x3 = self.sub(&self.sub(&(&lambda * &lambda), x1), x2);
        let y3 = self.sub(&(&lambda * self.sub(x1, &x3)), y1);
        Point::Affine { x: x3, y: y3 }
    }

    pub fn double(&self, pt: &Point) -> Point {
        self.add(pt, pt)
    }

    /// Left-to-right double-and-add.
    pub fn mul(&self, k: &BigUint, pt: &Point) -> Point {
        let mut acc = Point::Identity;
        for i in (0..k.bits()).rev() {
            acc = self.double(&acc);
            if k.bit(i) {
                acc = self.add(&acc, pt);
            }
        }
        acc
    }

    /// All points of a small curve by exhaustive search, identity first.
    pub fn enumerate(&self) -> Option<Vec<Point>> {
        let p: u64 = self.p.clone().try_into().ok().filter(|&p: &u64| p < 1 << 16)?;
        let mut pts = vec![Point::Identity];
        for x in 0..p {
            for y in 0..p {
                let pt = Point::affine(x, y);
                if self.contains(&pt) {
                    pts.push(pt);
                }
            }
        }
        Some(pts)
    }
}

impl Default for CurveParams {
    fn default() -> Self {
        Self::p256()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn toy_doubling() {
        let c = CurveParams::toy();
        assert_eq!(c.double(&c.g), Point::affine(6, 3));
        // schoolbook: λ = (3·25 + 2)/(2·1) = 77/2 ≡ 9·9 = 81 ≡ 13; x = 169 − 10 ≡ 6; y = 13(5−6) − 1 ≡ 3
        assert!(c.contains(&Point::affine(6, 3)));
    }

    #[test]
    fn toy_group_has_order_19() {
        let c = CurveParams::toy();
        assert!(c.is_valid());
        assert_eq!(c.enumerate().unwrap().len(), 19);
        let mut seen = std::collections::HashSet::new();
        let mut acc = Point::Identity;
        for _ in 0..19 {
            acc = c.add(&acc, &c.g);
            assert!(seen.insert(format!("{acc:?}")));
        }
        assert_eq!(acc, Point::Identity);
    }

    #[test]
    fn singular_curve_is_invalid() {
        let mut c = CurveParams::toy();
        c.a = 0u32.into();
        c.b = 0u32.into();
        assert!(!c.is_valid());
    }

    #[test]
    fn p256_params_are_consistent() {
        let c = CurveParams::p256();
        assert!(c.contains(&c.g));
        assert_eq!(c.mul(&BigUint::one(), &c.g), c.g);
    }

    #[test]
    fn toy_scalar_mult_commutes() {
        let c = CurveParams::toy();
        for a in 1u32..19 {
            for b in 1u32..19 {
                let ab = c.mul(&a.into(), &c.mul(&b.into(), &c.g));
                let ba = c.mul(&b.into(), &c.mul(&a.into(), &c.g));
                assert_eq!(ab, ba);
            }
        }
        assert_eq!(c.mul(&1u32.into(), &c.g), c.g);
    }
}
