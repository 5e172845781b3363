//! Encrypted hash lists: per-object lists of ciphertexts supporting a
//! randomized homomorphic equality operator.
//!
//! The compact variant hashes the object id with s keyed HMACs into Z_N and
//! encrypts the s residues. The classic variant is an encrypted Bloom bit
//! list of length H. Equality testing is the ⊖ operator
//!
//! `a ⊖ b = prod_i (a[i]·b[i]^{-1})^{r_i}`
//!
//! which decrypts to 0 exactly when the underlying lists match and is
//! near-uniform in Z_N otherwise. ⊙ adds an encrypted mask vector slot-wise
//! (blinding).

use crate::bigint::{batch_modinv, multi_exp, sample_below};
use crate::crypto::{add1, enc1, Ciphertext1, PublicKey, Randomizer};
use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};

pub const MAC_KEY_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EhlVariant {
    /// s encrypted HMAC residues in Z_N.
    Plus { s: u16 },
    /// Encrypted Bloom bit list: H slots, s hash functions.
    Classic { h: u16, s: u16 },
}

impl EhlVariant {
    pub fn s(&self) -> u16 {
        match self {
            EhlVariant::Plus { s } => *s,
            EhlVariant::Classic { s, .. } => *s,
        }
    }

    pub fn slots(&self) -> usize {
        match self {
            EhlVariant::Plus { s } => *s as usize,
            EhlVariant::Classic { h, .. } => *h as usize,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            EhlVariant::Plus { .. } => 1,
            EhlVariant::Classic { .. } => 2,
        }
    }
}

/// The s secret MAC keys plus variant configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EhlKeySet {
    pub variant: EhlVariant,
    pub keys: Vec<[u8; MAC_KEY_LEN]>,
}

impl EhlKeySet {
    pub fn generate(variant: EhlVariant, rng: &mut impl RngCore) -> Result<Self> {
        let s = variant.s();
        if s == 0 {
            return Err(Error::Domain("at least one hash key required".into()));
        }
        if let EhlVariant::Classic { h, s } = variant {
            if h < s {
                return Err(Error::Domain("classic variant requires H ≥ s".into()));
            }
        }
        let mut keys = Vec::with_capacity(s as usize);
        for _ in 0..s {
            let mut k = [0u8; MAC_KEY_LEN];
            rng.fill_bytes(&mut k);
            keys.push(k);
        }
        Ok(EhlKeySet { variant, keys })
    }

    /// Underlying plaintext slots for an object id; deterministic per key set.
    pub fn slots(&self, pk: &PublicKey, object_id: &[u8]) -> Result<Vec<BigUint>> {
        if object_id.is_empty() {
            return Err(Error::Domain("empty object id".into()));
        }
        match self.variant {
            EhlVariant::Plus { .. } => Ok(self
                .keys
                .iter()
                .map(|k| BigUint::from_bytes_be(&hmac_sha256(k, object_id)) % &pk.n)
                .collect()),
            EhlVariant::Classic { h, .. } => {
                let mut bits = vec![BigUint::zero(); h as usize];
                for k in &self.keys {
                    let idx_big = BigUint::from_bytes_be(&hmac_sha256(k, object_id))
                        % BigUint::from(h as u32);
                    let idx: u64 = idx_big.iter_u64_digits().next().unwrap_or(0);
                    bits[idx as usize] = BigUint::one();
                }
                Ok(bits)
            }
        }
    }
}

/// An encrypted hash list: one layer-1 ciphertext per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ehl {
    pub slots: Vec<Ciphertext1>,
}

impl Ehl {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn to_bytes(&self, variant: EhlVariant, pk: &PublicKey) -> Vec<u8> {
        let mut out = vec![variant.tag()];
        out.extend_from_slice(&(self.slots.len() as u16).to_be_bytes());
        for s in &self.slots {
            out.extend_from_slice(&s.to_bytes(pk));
        }
        out
    }

    pub fn from_bytes(pk: &PublicKey, bytes: &[u8]) -> Result<(EhlVariant, Ehl)> {
        if bytes.len() < 3 {
            return Err(Error::Format("truncated hash list".into()));
        }
        let count = u16::from_be_bytes([bytes[1], bytes[2]]) as usize;
        let w = pk.ct1_width();
        if bytes.len() != 3 + count * w {
            return Err(Error::Format("hash list length mismatch".into()));
        }
        let mut slots = Vec::with_capacity(count);
        for i in 0..count {
            slots.push(Ciphertext1::from_bytes(pk, &bytes[3 + i * w..3 + (i + 1) * w])?);
        }
        let variant = match bytes[0] {
            1 => EhlVariant::Plus { s: count as u16 },
            2 => EhlVariant::Classic { h: count as u16, s: 0 },
            t => return Err(Error::Format(format!("unknown hash list tag {t}"))),
        };
        Ok((variant, Ehl { slots }))
    }
}

/// Encode an object id with fresh full-width randomness per slot.
pub fn ehl_encode(
    keys: &EhlKeySet,
    pk: &PublicKey,
    object_id: &[u8],
    rng: &mut impl RngCore,
) -> Result<Ehl> {
    let slots = keys.slots(pk, object_id)?;
    let mut out = Vec::with_capacity(slots.len());
    for v in &slots {
        out.push(enc1(pk, v, rng)?);
    }
    Ok(Ehl { slots: out })
}

/// Pool-randomized encode for bulk relation encryption.
pub fn ehl_encode_fast(
    keys: &EhlKeySet,
    pk: &PublicKey,
    object_id: &[u8],
    pool: &Randomizer,
    rng: &mut impl RngCore,
) -> Result<Ehl> {
    let slots = keys.slots(pk, object_id)?;
    Ok(Ehl { slots: slots.iter().map(|v| pool.enc1(v, rng)).collect() })
}

/// The ⊖ operator. Decrypts to 0 iff the underlying lists are equal;
/// otherwise the result is uniform in Z_N with overwhelming probability.
/// Randomized: repeated calls on the same pair give distinct ciphertexts.
pub fn ehl_sub(pk: &PublicKey, a: &Ehl, b: &Ehl, rng: &mut impl RngCore) -> Result<Ciphertext1> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Domain("hash list length mismatch".into()));
    }
    let b_vals: Vec<BigUint> = b.slots.iter().map(|c| c.0.clone()).collect();
    let b_inv = batch_modinv(&b_vals, &pk.n2)
        .ok_or_else(|| Error::Ciphertext("non-invertible hash list slot".into()))?;
    let bases: Vec<BigUint> =
        a.slots.iter().zip(&b_inv).map(|(ai, bi)| &ai.0 * bi % &pk.n2).collect();
    let exps: Vec<BigUint> = (0..bases.len()).map(|_| sample_below(rng, &pk.n)).collect();
    Ok(Ciphertext1(multi_exp(&bases, &exps, &pk.n2)))
}

/// The ⊙ operator: slot-wise homomorphic addition of an encrypted mask
/// vector onto a hash list.
pub fn ehl_blind(pk: &PublicKey, masks: &[Ciphertext1], e: &Ehl) -> Result<Ehl> {
    if masks.len() != e.len() {
        return Err(Error::Domain("mask length mismatch".into()));
    }
    Ok(Ehl {
        slots: e.slots.iter().zip(masks).map(|(s, m)| add1(pk, m, s)).collect(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FprParams {
    /// Relation size.
    pub n: u64,
    pub variant: EhlVariant,
    /// Modulus width for the compact variant.
    pub modulus_bits: u64,
}

/// Closed-form false-positive bound for the configured variant. May
/// underflow to 0 for the compact variant; use [`fpr_bound_log2`] for
/// assertions about negligible rates.
pub fn fpr_bound(p: &FprParams) -> Result<f64> {
    Ok(2f64.powf(fpr_bound_log2(p)?))
}

/// log2 of the false-positive bound.
pub fn fpr_bound_log2(p: &FprParams) -> Result<f64> {
    if p.n == 0 {
        return Err(Error::Domain("relation size must be positive".into()));
    }
    match p.variant {
        EhlVariant::Plus { s } => {
            if s == 0 {
                return Err(Error::Domain("s must be positive".into()));
            }
            // n² / N^s
            Ok(2.0 * (p.n as f64).log2() - (s as f64) * (p.modulus_bits as f64))
        }
        EhlVariant::Classic { h, s } => {
            if s == 0 {
                return Err(Error::Domain("s must be positive".into()));
            }
            if h == 0 {
                return Err(Error::Domain("H must be positive".into()));
            }
            // 0.62^{H/n}
            Ok((h as f64 / p.n as f64) * 0.62f64.log2())
        }
    }
}

/// Reverse lookup from decrypted hash-list slots to object ids. Only a
/// key-holder (the verification harness or an authorized client) can use
/// it, since identification requires decrypting the slots.
pub struct EhlDictionary {
    map: std::collections::HashMap<Vec<u8>, Vec<u8>>,
    slot_count: usize,
}

impl EhlDictionary {
    pub fn build<'a>(
        keys: &EhlKeySet,
        pk: &PublicKey,
        ids: impl IntoIterator<Item = &'a [u8]>,
    ) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let mut slot_count = keys.variant.slots();
        for id in ids {
            let slots = keys.slots(pk, id)?;
            slot_count = slots.len();
            map.insert(Self::slot_key(&slots), id.to_vec());
        }
        Ok(EhlDictionary { map, slot_count })
    }

    fn slot_key(slots: &[BigUint]) -> Vec<u8> {
        let mut h = Sha256::new();
        for s in slots {
            let b = s.to_bytes_be();
            h.update((b.len() as u32).to_be_bytes());
            h.update(&b);
        }
        h.finalize().to_vec()
    }

    /// Decrypt the list and look the slot pattern up; `None` for unknown
    /// patterns (e.g. voided sentinel items).
    pub fn identify(
        &self,
        sk: &crate::crypto::SecretKey,
        ehl: &Ehl,
    ) -> Result<Option<Vec<u8>>> {
        if ehl.len() != self.slot_count {
            return Err(Error::Domain("hash list length mismatch".into()));
        }
        let slots: Result<Vec<BigUint>> =
            ehl.slots.iter().map(|c| crate::crypto::dec1(sk, c)).collect();
        Ok(self.map.get(&Self::slot_key(&slots?)).cloned())
    }
}

fn hmac_sha256(key: &[u8], msg: &[u8]) -> [u8; 32] {
    const BLOCK: usize = 64;
    let mut k = [0u8; BLOCK];
    if key.len() > BLOCK {
        k[..32].copy_from_slice(&Sha256::digest(key));
    } else {
        k[..key.len()].copy_from_slice(key);
    }
    let mut inner = Sha256::new();
    let ipad: Vec<u8> = k.iter().map(|b| b ^ 0x36).collect();
    inner.update(&ipad);
    inner.update(msg);
    let inner_hash = inner.finalize();
    let mut outer = Sha256::new();
    let opad: Vec<u8> = k.iter().map(|b| b ^ 0x5c).collect();
    outer.update(&opad);
    outer.update(inner_hash);
    outer.finalize().into()
}

/// Canonical byte encoding for integer object ids (8-byte big-endian).
pub fn int_id(v: u64) -> [u8; 8] {
    v.to_be_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{dec1, testkit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(99)
    }

    fn plus_keys(r: &mut ChaCha20Rng) -> EhlKeySet {
        EhlKeySet::generate(EhlVariant::Plus { s: 5 }, r).unwrap()
    }

    #[test]
    fn hmac_test_vector() {
        // RFC 4231 test case 2
        let mac = hmac_sha256(b"Jefe", b"what do ya want for nothing?");
        assert_eq!(
            hex(&mac),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }

    fn hex(b: &[u8]) -> String {
        b.iter().map(|x| format!("{x:02x}")).collect()
    }

    #[test]
    fn self_equality_decrypts_zero() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let keys = plus_keys(&mut r);
        let a = ehl_encode(&keys, pk, b"object-1", &mut r).unwrap();
        let b = ehl_encode(&keys, pk, b"object-1", &mut r).unwrap();
        assert_ne!(a, b); // fresh ciphertexts
        let d = ehl_sub(pk, &a, &b, &mut r).unwrap();
        assert!(dec1(sk, &d).unwrap().is_zero());
    }

    #[test]
    fn distinct_objects_decrypt_nonzero() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let keys = plus_keys(&mut r);
        for i in 0..32u64 {
            let a = ehl_encode(&keys, pk, &int_id(i), &mut r).unwrap();
            let b = ehl_encode(&keys, pk, &int_id(i + 1000), &mut r).unwrap();
            let d = ehl_sub(pk, &a, &b, &mut r).unwrap();
            assert!(!dec1(sk, &d).unwrap().is_zero());
        }
    }

    #[test]
    fn sub_is_randomized() {
        let (pk, _) = testkit::keys512();
        let mut r = rng();
        let keys = plus_keys(&mut r);
        let a = ehl_encode(&keys, pk, b"x", &mut r).unwrap();
        let b = ehl_encode(&keys, pk, b"y", &mut r).unwrap();
        let d1 = ehl_sub(pk, &a, &b, &mut r).unwrap();
        let d2 = ehl_sub(pk, &a, &b, &mut r).unwrap();
        assert_ne!(d1, d2);
    }

    #[test]
    fn classic_variant_length() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let keys = EhlKeySet::generate(EhlVariant::Classic { h: 23, s: 5 }, &mut r).unwrap();
        let e = ehl_encode(&keys, pk, b"patient", &mut r).unwrap();
        assert_eq!(e.len(), 23);
        let e2 = ehl_encode(&keys, pk, b"patient", &mut r).unwrap();
        let d = ehl_sub(pk, &e, &e2, &mut r).unwrap();
        assert!(dec1(sk, &d).unwrap().is_zero());
    }

    #[test]
    fn classic_requires_h_at_least_s() {
        let mut r = rng();
        assert!(EhlKeySet::generate(EhlVariant::Classic { h: 3, s: 5 }, &mut r).is_err());
    }

    #[test]
    fn empty_id_rejected() {
        let (pk, _) = testkit::keys512();
        let mut r = rng();
        let keys = plus_keys(&mut r);
        assert!(ehl_encode(&keys, pk, b"", &mut r).is_err());
    }

    #[test]
    fn blind_with_zero_masks_is_identity() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let keys = plus_keys(&mut r);
        let e = ehl_encode(&keys, pk, b"obj", &mut r).unwrap();
        let zeros: Vec<_> =
            (0..5).map(|_| enc1(pk, &BigUint::zero(), &mut r).unwrap()).collect();
        let blinded = ehl_blind(pk, &zeros, &e).unwrap();
        let fresh = ehl_encode(&keys, pk, b"obj", &mut r).unwrap();
        let d = ehl_sub(pk, &blinded, &fresh, &mut r).unwrap();
        assert!(dec1(sk, &d).unwrap().is_zero());
    }

    #[test]
    fn blind_then_unblind_restores_equality() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let keys = plus_keys(&mut r);
        let e = ehl_encode(&keys, pk, b"obj", &mut r).unwrap();
        let alphas: Vec<BigUint> = (0..5).map(|_| sample_below(&mut r, &pk.n)).collect();
        let masks: Vec<_> = alphas.iter().map(|a| enc1(pk, a, &mut r).unwrap()).collect();
        let blinded = ehl_blind(pk, &masks, &e).unwrap();
        // blinded list no longer matches the original
        let fresh = ehl_encode(&keys, pk, b"obj", &mut r).unwrap();
        let d = ehl_sub(pk, &blinded, &fresh, &mut r).unwrap();
        assert!(!dec1(sk, &d).unwrap().is_zero());
        // negated masks restore it
        let neg_masks: Vec<_> = alphas
            .iter()
            .map(|a| enc1(pk, &((&pk.n - a) % &pk.n), &mut r).unwrap())
            .collect();
        let restored = ehl_blind(pk, &neg_masks, &blinded).unwrap();
        let d = ehl_sub(pk, &restored, &fresh, &mut r).unwrap();
        assert!(dec1(sk, &d).unwrap().is_zero());
    }

    #[test]
    fn single_slot_blind_matches_add1() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let x = BigUint::from(11u32);
        let m = BigUint::from(31u32);
        let e = Ehl { slots: vec![enc1(pk, &x, &mut r).unwrap()] };
        let mask = enc1(pk, &m, &mut r).unwrap();
        let out = ehl_blind(pk, &[mask.clone()], &e).unwrap();
        assert_eq!(
            dec1(sk, &out.slots[0]).unwrap(),
            dec1(sk, &add1(pk, &e.slots[0], &mask)).unwrap()
        );
    }

    #[test]
    fn fpr_formulas() {
        // compact: n=10^6, |N|=512, s=5 → below 2^-2500
        let p = FprParams {
            n: 1_000_000,
            variant: EhlVariant::Plus { s: 5 },
            modulus_bits: 512,
        };
        assert!(fpr_bound_log2(&p).unwrap() < -2500.0);
        assert_eq!(fpr_bound(&p).unwrap(), 0.0); // underflows
        // classic: H/n = 10 → 0.62^10 ≈ 8.4e-3
        let c = FprParams {
            n: 1,
            variant: EhlVariant::Classic { h: 10, s: 7 },
            modulus_bits: 512,
        };
        let v = fpr_bound(&c).unwrap();
        assert!((v - 0.0084).abs() < 0.001, "got {v}");
        // s = 0 rejected
        let bad = FprParams { n: 10, variant: EhlVariant::Plus { s: 0 }, modulus_bits: 512 };
        assert!(fpr_bound(&bad).is_err());
    }

    #[test]
    fn serialization_roundtrip() {
        let (pk, _) = testkit::keys512();
        let mut r = rng();
        let keys = plus_keys(&mut r);
        let e = ehl_encode(&keys, pk, b"obj", &mut r).unwrap();
        let bytes = e.to_bytes(keys.variant, pk);
        let (var, back) = Ehl::from_bytes(pk, &bytes).unwrap();
        assert_eq!(var, EhlVariant::Plus { s: 5 });
        assert_eq!(back, e);
        assert!(Ehl::from_bytes(pk, &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let (pk, _) = testkit::keys512();
        let mut r = rng();
        let k5 = plus_keys(&mut r);
        let k3 = EhlKeySet::generate(EhlVariant::Plus { s: 3 }, &mut r).unwrap();
        let a = ehl_encode(&k5, pk, b"x", &mut r).unwrap();
        let b = ehl_encode(&k3, pk, b"x", &mut r).unwrap();
        assert!(ehl_sub(pk, &a, &b, &mut r).is_err());
    }
}
