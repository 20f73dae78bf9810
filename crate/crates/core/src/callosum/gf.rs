//! Arithmetic in GF(2^m), m <= 8, via exp/log tables.

use std::sync::OnceLock;

/// x^8 + x^4 + x^3 + x^2 + 1
pub const GF256_PRIMITIVE: u32 = 0x11D;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaloisField {
    bits: u32,
    primitive: u32,
    exp: Vec<u8>,
    log: Vec<u16>,
}

impl GaloisField {
    /// Build GF(2^bits) from `primitive`. Returns `None` if the polynomial
    /// does not generate every non-zero element.
    pub fn new(bits: u32, primitive: u32) -> Option<Self> {
        if !(2..=8).contains(&bits) || primitive >> bits != 1 {
            return None;
        }
        let size = 1usize << bits;
        let order = size - 1;
        let mut exp = vec![0u8; 2 * order];
        let mut log = vec![0u16; size];
        let mut x: u32 = 1;
        for i in 0..order {
            if i > 0 && x == 1 {
                return None;
            }
            exp[i] = x as u8;
            log[x as usize] = i as u16;
            x <<= 1;
            if x & (1 << bits) != 0 {
                x ^= primitive;
            }
        }
        if x != 1 {
            return None;
        }
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Some(Self {
            bits,
            primitive,
            exp,
            log,
        })
    }

    /// GF(256) with primitive polynomial 0x11D.
    pub fn gf256() -> &'static GaloisField {
        static FIELD: OnceLock<GaloisField> = OnceLock::new();
        FIELD.get_or_init(|| GaloisField::new(8, GF256_PRIMITIVE).expect("0x11D is primitive"))
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn primitive(&self) -> u32 {
        self.primitive
    }

    /// Number of non-zero elements, 2^m - 1.
    pub fn order(&self) -> usize {
        (1usize << self.bits) - 1
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    /// Panics on division by zero.
    #[inline]
    pub fn div(&self, a: u8, b: u8) -> u8 {
        assert!(b != 0, "division by zero in GF(2^{})", self.bits);
        if a == 0 {
            return 0;
        }
        let order = self.order();
        self.exp[(self.log[a as usize] as usize + order - self.log[b as usize] as usize) % order]
    }

    #[inline]
    pub fn inv(&self, a: u8) -> u8 {
        self.div(1, a)
    }

    /// alpha^power for any integer power.
    #[inline]
    pub fn alpha_pow(&self, power: i64) -> u8 {
        let order = self.order() as i64;
        self.exp[power.rem_euclid(order) as usize]
    }

    #[inline]
    pub fn log(&self, a: u8) -> Option<usize> {
        (a != 0).then(|| self.log[a as usize] as usize)
    }
}
