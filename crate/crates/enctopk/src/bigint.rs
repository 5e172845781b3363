//! Big-integer helpers shared by the cryptosystems: deterministic sampling,
//! modular inverses, probabilistic prime generation, and an interleaved
//! multi-exponentiation used on the hot protocol paths.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::RngCore;

/// Uniform sample in `[0, bound)` by rejection from the next power of two.
pub fn sample_below(rng: &mut impl RngCore, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero());
    let bits = bound.bits();
    let bytes = ((bits + 7) / 8) as usize;
    let top_mask = if bits % 8 == 0 { 0xffu8 } else { (1u8 << (bits % 8)) - 1 };
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= top_mask;
        let v = BigUint::from_bytes_be(&buf);
        if &v < bound {
            return v;
        }
    }
}

/// Uniform sample with exactly `bits` random bits.
pub fn sample_bits(rng: &mut impl RngCore, bits: u64) -> BigUint {
    let bytes = ((bits + 7) / 8) as usize;
    let mut buf = vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    if bits % 8 != 0 {
        buf[0] &= (1u8 << (bits % 8)) - 1;
    }
    BigUint::from_bytes_be(&buf)
}

/// Uniform sample in `[1, bound)` coprime to `bound`.
pub fn sample_unit(rng: &mut impl RngCore, bound: &BigUint) -> BigUint {
    loop {
        let v = sample_below(rng, bound);
        if !v.is_zero() && v.gcd(bound).is_one() {
            return v;
        }
    }
}

/// Modular inverse, if it exists.
pub fn modinv(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let a = BigInt::from(a.clone());
    let m_i = BigInt::from(m.clone());
    let e = a.extended_gcd(&m_i);
    if !e.gcd.is_one() {
        return None;
    }
    let mut x = e.x % &m_i;
    if x.is_negative() {
        x += &m_i;
    }
    Some(x.to_biguint().unwrap())
}

/// Montgomery batch inversion: inverts every element with one gcd and
/// 3(n-1) multiplications. All inputs must be units mod `m`.
pub fn batch_modinv(values: &[BigUint], m: &BigUint) -> Option<Vec<BigUint>> {
    if values.is_empty() {
        return Some(Vec::new());
    }
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = BigUint::one();
    for v in values {
        acc = &acc * v % m;
        prefix.push(acc.clone());
    }
    let mut inv_acc = modinv(&acc, m)?;
    let mut out = vec![BigUint::zero(); values.len()];
    for i in (0..values.len()).rev() {
        if i == 0 {
            out[0] = inv_acc.clone();
        } else {
            out[i] = &prefix[i - 1] * &inv_acc % m;
            inv_acc = &inv_acc * &values[i] % m;
        }
    }
    Some(out)
}

/// Interleaved sliding-window multi-exponentiation:
/// `prod_i bases[i]^exps[i] mod m`. Shares one squaring chain across all
/// bases, which beats independent modpows once two or more terms share a
/// modulus.
pub fn multi_exp(bases: &[BigUint], exps: &[BigUint], m: &BigUint) -> BigUint {
    assert_eq!(bases.len(), exps.len());
    if bases.is_empty() {
        return BigUint::one();
    }
    if bases.len() == 1 {
        return bases[0].modpow(&exps[0], m);
    }
    const W: u64 = 4;
    let table_len = 1usize << (W - 1); // odd powers b^1, b^3, ..., b^(2^W - 1)
    let mut tables = Vec::with_capacity(bases.len());
    for b in bases {
        let b = b % m;
        let b2 = &b * &b % m;
        let mut t = Vec::with_capacity(table_len);
        t.push(b.clone());
        for i in 1..table_len {
            let prev: &BigUint = &t[i - 1];
            t.push(prev * &b2 % m);
        }
        tables.push(t);
    }

    // Per-base window schedule: (bit position, odd table index).
    let mut windows: Vec<Vec<(u64, usize)>> = Vec::with_capacity(bases.len());
    let mut max_bit: i64 = -1;
    for e in exps {
        let mut sched = Vec::new();
        let bits = e.bits();
        if bits > 0 {
            max_bit = max_bit.max(bits as i64 - 1);
        }
        let mut i: i64 = bits as i64 - 1;
        while i >= 0 {
            if !e.bit(i as u64) {
                i -= 1;
                continue;
            }
            let lo = (i - W as i64 + 1).max(0);
            // shrink the window so it ends on a set bit
            let mut j = lo;
            while !e.bit(j as u64) {
                j += 1;
            }
            let mut val = 0usize;
            for k in (j..=i).rev() {
                val = (val << 1) | e.bit(k as u64) as usize;
            }
            sched.push((j as u64, (val - 1) / 2));
            i = j - 1;
        }
        windows.push(sched);
    }
    if max_bit < 0 {
        return BigUint::one();
    }

    let mut acc = BigUint::one();
    let mut cursors = vec![0usize; bases.len()];
    for bit in (0..=max_bit as u64).rev() {
        if !acc.is_one() {
            acc = &acc * &acc % m;
        }
        for (bi, sched) in windows.iter().enumerate() {
            let c = cursors[bi];
            if c < sched.len() && sched[c].0 == bit {
                acc = &acc * &tables[bi][sched[c].1] % m;
                cursors[bi] += 1;
            }
        }
    }
    acc
}

/// Miller-Rabin with random bases from the caller's rng.
pub fn is_probable_prime(n: &BigUint, rounds: u32, rng: &mut impl RngCore) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    const SMALL: [u32; 25] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83,
        89, 97,
    ];
    for p in SMALL {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap();
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = sample_below(rng, &(&n_minus_1 - &one)) + &two; // in [2, n-1)
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = &x * &x % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits (top two bits set so products of two
/// such primes have full width).
pub fn gen_prime(bits: u64, rng: &mut impl RngCore) -> BigUint {
    assert!(bits >= 16);
    loop {
        let mut cand = sample_bits(rng, bits);
        cand.set_bit(bits - 1, true);
        cand.set_bit(bits - 2, true);
        cand.set_bit(0, true);
        if is_probable_prime(&cand, 32, rng) {
            return cand;
        }
    }
}

/// Fixed-width big-endian encoding; panics if the value does not fit.
pub fn to_fixed_be(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= width, "value wider than its field");
    let mut out = vec![0u8; width];
    out[width - raw.len()..].copy_from_slice(&raw);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn sample_below_in_range() {
        let mut r = rng();
        let bound = BigUint::from(1000u32);
        for _ in 0..200 {
            assert!(sample_below(&mut r, &bound) < bound);
        }
    }

    #[test]
    fn modinv_roundtrip() {
        let mut r = rng();
        let m = gen_prime(64, &mut r) * gen_prime(64, &mut r);
        for _ in 0..50 {
            let a = sample_unit(&mut r, &m);
            let inv = modinv(&a, &m).unwrap();
            assert!((a * inv % &m).is_one());
        }
    }

    #[test]
    fn batch_modinv_matches_single() {
        let mut r = rng();
        let m = gen_prime(64, &mut r) * gen_prime(64, &mut r);
        let vals: Vec<_> = (0..9).map(|_| sample_unit(&mut r, &m)).collect();
        let batch = batch_modinv(&vals, &m).unwrap();
        for (v, b) in vals.iter().zip(&batch) {
            assert_eq!(*b, modinv(v, &m).unwrap());
        }
    }

    #[test]
    fn multi_exp_matches_naive() {
        let mut r = rng();
        let m = gen_prime(96, &mut r) * gen_prime(96, &mut r);
        for n_bases in 1..=6 {
            let bases: Vec<_> = (0..n_bases).map(|_| sample_unit(&mut r, &m)).collect();
            let exps: Vec<_> = (0..n_bases).map(|_| sample_bits(&mut r, 160)).collect();
            let expect = bases
                .iter()
                .zip(&exps)
                .fold(BigUint::one(), |acc, (b, e)| acc * b.modpow(e, &m) % &m);
            assert_eq!(multi_exp(&bases, &exps, &m), expect);
        }
    }

    #[test]
    fn multi_exp_zero_exponents() {
        let mut r = rng();
        let m = gen_prime(64, &mut r) * gen_prime(64, &mut r);
        let bases = vec![sample_unit(&mut r, &m), sample_unit(&mut r, &m)];
        let exps = vec![BigUint::zero(), BigUint::zero()];
        assert!(multi_exp(&bases, &exps, &m).is_one());
    }

    #[test]
    fn primes_are_odd_and_sized() {
        let mut r = rng();
        let p = gen_prime(128, &mut r);
        assert_eq!(p.bits(), 128);
        assert!(p.bit(0));
    }
}
