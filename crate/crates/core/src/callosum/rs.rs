//! Systematic Reed-Solomon codes over GF(2^m).
//!
//! Codeword byte `i` of an `n`-byte codeword is the coefficient of
//! `x^(n-1-i)`. The generator is `prod_{j=0}^{nsym-1} (x - alpha^j)`, parity
//! is the remainder of `data(x) * x^nsym` modulo the generator, and decoding
//! uses Berlekamp-Massey, Chien search and Forney's formula. Up to
//! `nsym / 2` byte errors at unknown positions are corrected.

use thiserror::Error;

use super::gf::GaloisField;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RsError {
    #[error("parity length {0} must be at least 2")]
    ParityTooShort(usize),
    #[error("codeword length {len} exceeds the field limit {max}")]
    TooLong { len: usize, max: usize },
    #[error("codeword shorter than its parity")]
    TooShort,
    #[error("reed-solomon decode failure: too many errors")]
    DecodeFailure,
}

#[derive(Debug, Clone)]
pub struct ReedSolomon {
    field: GaloisField,
    nsym: usize,
    // Highest-degree coefficient first; generator[0] == 1.
    generator: Vec<u8>,
}

impl ReedSolomon {
    pub fn new(field: GaloisField, nsym: usize) -> Result<Self, RsError> {
        if nsym < 2 {
            return Err(RsError::ParityTooShort(nsym));
        }
        if nsym >= field.order() {
            return Err(RsError::TooLong {
                len: nsym + 1,
                max: field.order(),
            });
        }
        let mut generator = vec![1u8];
        for j in 0..nsym {
            let root = field.alpha_pow(j as i64);
            let mut next = vec![0u8; generator.len() + 1];
            for (i, &g) in generator.iter().enumerate() {
                next[i] ^= g;
                next[i + 1] ^= field.mul(g, root);
            }
            generator = next;
        }
        Ok(Self {
            field,
            nsym,
            generator,
        })
    }

    /// RS over GF(256) with the 0x11D field.
    pub fn gf256(nsym: usize) -> Result<Self, RsError> {
        Self::new(GaloisField::gf256().clone(), nsym)
    }

    pub fn nsym(&self) -> usize {
        self.nsym
    }

    pub fn field(&self) -> &GaloisField {
        &self.field
    }

    /// Maximum number of data symbols per codeword.
    pub fn max_data_len(&self) -> usize {
        self.field.order() - self.nsym
    }

    pub fn generator(&self) -> &[u8] {
        &self.generator
    }

    /// Parity symbols for `data`.
    pub fn parity(&self, data: &[u8]) -> Result<Vec<u8>, RsError> {
        if data.len() > self.max_data_len() {
            return Err(RsError::TooLong {
                len: data.len() + self.nsym,
                max: self.field.order(),
            });
        }
        let f = &self.field;
        let mut rem = vec![0u8; self.nsym];
        for &d in data {
            let coef = d ^ rem[0];
            rem.rotate_left(1);
            rem[self.nsym - 1] = 0;
            if coef != 0 {
                for (r, &g) in rem.iter_mut().zip(&self.generator[1..]) {
                    *r ^= f.mul(g, coef);
                }
            }
        }
        Ok(rem)
    }

    /// `data` followed by its parity.
    pub fn encode(&self, data: &[u8]) -> Result<Vec<u8>, RsError> {
        let mut out = Vec::with_capacity(data.len() + self.nsym);
        out.extend_from_slice(data);
        out.extend(self.parity(data)?);
        Ok(out)
    }

    fn syndromes(&self, codeword: &[u8]) -> Vec<u8> {
        let f = &self.field;
        (0..self.nsym)
            .map(|j| {
                let x = f.alpha_pow(j as i64);
                codeword.iter().fold(0u8, |acc, &c| f.mul(acc, x) ^ c)
            })
            .collect()
    }

    pub fn is_codeword(&self, codeword: &[u8]) -> bool {
        self.syndromes(codeword).iter().all(|&s| s == 0)
    }

    /// Correct `codeword` in place, returning the number of symbols fixed.
    pub fn correct_in_place(&self, codeword: &mut [u8]) -> Result<usize, RsError> {
        let n = codeword.len();
        if n > self.field.order() {
            return Err(RsError::TooLong {
                len: n,
                max: self.field.order(),
            });
        }
        if n < self.nsym {
            return Err(RsError::TooShort);
        }
        let f = &self.field;
        let synd = self.syndromes(codeword);
        if synd.iter().all(|&s| s == 0) {
            return Ok(0);
        }

        // Berlekamp-Massey; polynomials lowest-degree first.
        let mut lambda = vec![1u8];
        let mut prev = vec![1u8];
        let mut len = 0usize;
        let mut shift = 1usize;
        let mut prev_disc = 1u8;
        for k in 0..self.nsym {
            let mut d = synd[k];
            for i in 1..=len.min(lambda.len() - 1) {
                d ^= f.mul(lambda[i], synd[k - i]);
            }
            if d == 0 {
                shift += 1;
                continue;
            }
            let scale = f.div(d, prev_disc);
            let mut next = lambda.clone();
            if next.len() < prev.len() + shift {
                next.resize(prev.len() + shift, 0);
            }
            for (i, &p) in prev.iter().enumerate() {
                next[i + shift] ^= f.mul(scale, p);
            }
            if 2 * len <= k {
                prev = std::mem::replace(&mut lambda, next);
                len = k + 1 - len;
                prev_disc = d;
                shift = 1;
            } else {
                lambda = next;
                shift += 1;
            }
        }
        while lambda.len() > 1 && *lambda.last().unwrap() == 0 {
            lambda.pop();
        }
        let errors = lambda.len() - 1;
        if errors != len || 2 * errors > self.nsym {
            return Err(RsError::DecodeFailure);
        }

        let eval = |poly: &[u8], x: u8| poly.iter().rev().fold(0u8, |acc, &c| f.mul(acc, x) ^ c);

        // Chien search over the positions actually present.
        let mut positions = Vec::with_capacity(errors);
        for i in 0..n {
            let power = (n - 1 - i) as i64;
            if eval(&lambda, f.alpha_pow(-power)) == 0 {
                positions.push(i);
            }
        }
        if positions.len() != errors {
            return Err(RsError::DecodeFailure);
        }

        // Omega = S(x) * Lambda(x) mod x^nsym
        let mut omega = vec![0u8; self.nsym];
        for (i, &s) in synd.iter().enumerate() {
            for (j, &l) in lambda.iter().enumerate() {
                if i + j < self.nsym {
                    omega[i + j] ^= f.mul(s, l);
                }
            }
        }
        // Formal derivative: only odd powers survive in characteristic 2.
        let derivative: Vec<u8> = lambda
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| if i % 2 == 1 { c } else { 0 })
            .collect();

        for &i in &positions {
            let power = (n - 1 - i) as i64;
            let x = f.alpha_pow(power);
            let x_inv = f.alpha_pow(-power);
            let denom = eval(&derivative, x_inv);
            if denom == 0 {
                return Err(RsError::DecodeFailure);
            }
            let magnitude = f.mul(x, f.div(eval(&omega, x_inv), denom));
            codeword[i] ^= magnitude;
        }
        if !self.is_codeword(codeword) {
            return Err(RsError::DecodeFailure);
        }
        Ok(errors)
    }

    /// Corrected data part of `codeword`.
    pub fn decode(&self, codeword: &[u8]) -> Result<Vec<u8>, RsError> {
        let mut buf = codeword.to_vec();
        self.correct_in_place(&mut buf)?;
        buf.truncate(codeword.len() - self.nsym);
        Ok(buf)
    }
}

/// Systematic GF(256) encoding of `block` with `nsym` parity bytes.
pub fn rs_encode(block: &[u8], nsym: usize) -> Result<Vec<u8>, RsError> {
    ReedSolomon::gf256(nsym)?.encode(block)
}

/// Decode a GF(256) codeword carrying `nsym` parity bytes.
pub fn rs_decode(codeword: &[u8], nsym: usize) -> Result<Vec<u8>, RsError> {
    ReedSolomon::gf256(nsym)?.decode(codeword)
}
