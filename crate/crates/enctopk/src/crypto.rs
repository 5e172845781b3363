//! Paillier (layer 1, mod N²) and generalized Damgård-Jurik with s = 2
//! (layer 2, mod N³) under one modulus, plus the layered-exponentiation
//! identity the protocols rely on:
//!
//! `Etwo(Enc(m1))^Enc(m2) = Etwo(Enc(m1)·Enc(m2)) = Etwo(Enc(m1+m2))`
//!
//! Both layers use g = 1+N, so the message part of an encryption is the
//! binomial `(1+N)^m` and only the randomizer costs a real exponentiation.

use crate::bigint::{gen_prime, modinv, sample_below, sample_bits, sample_unit, to_fixed_be};
use crate::error::{Error, Result};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};

/// Key-size profiles. `Test` keeps CI suites fast; `Paper` matches the
/// 128-bit-security setting reported for the original experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyProfile {
    Test,
    Bench,
    Paper,
}

impl KeyProfile {
    pub fn modulus_bits(self) -> u64 {
        match self {
            KeyProfile::Test => 512,
            KeyProfile::Bench => 2048,
            KeyProfile::Paper => 3072,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(KeyProfile::Test),
            "bench" => Ok(KeyProfile::Bench),
            "paper" => Ok(KeyProfile::Paper),
            other => Err(Error::Usage(format!("unknown profile `{other}`"))),
        }
    }
}

/// Layer-1 ciphertext: a residue in Z_{N²}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext1(pub BigUint);

/// Layer-2 (Damgård-Jurik, s = 2) ciphertext: a residue in Z_{N³}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext2(pub BigUint);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub bits: u64,
    pub n: BigUint,
    pub n2: BigUint,
    pub n3: BigUint,
    half_n: BigUint,
    /// h^N mod N²: base of the layer-1 randomizer subgroup.
    g1: BigUint,
    /// h^{N²} mod N³: base of the layer-2 randomizer subgroup.
    g2: BigUint,
}

#[derive(Debug, Clone)]
pub struct SecretKey {
    pub p: BigUint,
    pub q: BigUint,
    pub pk: PublicKey,
    // CRT precomputation for layer-1 decryption
    p2: BigUint,
    q2: BigUint,
    hp: BigUint,
    hq: BigUint,
    p_inv_q: BigUint,
    // layer-2 decryption
    lambda: BigUint,
    mu2: BigUint,
    inv2_n2: BigUint,
}

/// Bytes of one serialized layer-1 ciphertext: ⌈|N²|/8⌉.
pub fn ct1_width(bits: u64) -> usize {
    (bits as usize * 2) / 8
}

/// Bytes of one serialized layer-2 ciphertext: ⌈|N³|/8⌉.
pub fn ct2_width(bits: u64) -> usize {
    (bits as usize * 3) / 8
}

fn derive_h(n: &BigUint, n3: &BigUint) -> BigUint {
    // Public, deterministic unit mod N³ expanded from the modulus itself.
    let n_bytes = n.to_bytes_be();
    let mut ctr = 0u32;
    loop {
        let mut buf = Vec::new();
        for i in 0..((n3.bits() / 200) + 1) {
            let mut hasher = Sha256::new();
            hasher.update(b"enctopk.h");
            hasher.update(ctr.to_be_bytes());
            hasher.update((i as u32).to_be_bytes());
            hasher.update(&n_bytes);
            buf.extend_from_slice(&hasher.finalize());
        }
        let h = BigUint::from_bytes_be(&buf) % n3;
        if !h.is_zero() && h.gcd(n).is_one() {
            return h;
        }
        ctr += 1;
    }
}

impl PublicKey {
    pub fn from_modulus(bits: u64, n: BigUint) -> Result<Self> {
        if bits % 16 != 0 {
            return Err(Error::Key("modulus bit length must be a multiple of 16".into()));
        }
        if !n.bit(0) {
            return Err(Error::Key("modulus must be odd".into()));
        }
        if n.bits() != bits {
            return Err(Error::Key(format!(
                "modulus has {} bits, expected {bits}",
                n.bits()
            )));
        }
        let n2 = &n * &n;
        let n3 = &n2 * &n;
        let h = derive_h(&n, &n3);
        let g1 = h.modpow(&n, &n2);
        let g2 = h.modpow(&n2, &n3);
        let half_n = &n >> 1;
        Ok(PublicKey { bits, n, n2, n3, half_n, g1, g2 })
    }

    pub fn ct1_width(&self) -> usize {
        ct1_width(self.bits)
    }

    pub fn ct2_width(&self) -> usize {
        ct2_width(self.bits)
    }

    /// Short public fingerprint, embedded in file headers so mismatched key
    /// material fails fast.
    pub fn fingerprint(&self) -> [u8; 8] {
        let mut hasher = Sha256::new();
        hasher.update(b"enctopk.fp");
        hasher.update(self.n.to_bytes_be());
        let d = hasher.finalize();
        let mut out = [0u8; 8];
        out.copy_from_slice(&d[..8]);
        out
    }

    /// `(1+N)^m mod N²`: the message part of a layer-1 encryption.
    fn msg_part1(&self, m: &BigUint) -> BigUint {
        (BigUint::one() + m * &self.n) % &self.n2
    }

    /// `(1+N)^x mod N³` via the binomial expansion (exact for s = 2).
    fn msg_part2(&self, x: &BigUint) -> BigUint {
        let x = x % &self.n2;
        let mut acc = BigUint::one() + &x * &self.n;
        // C(x,2)·N² — x(x-1) is even, so the division is exact.
        let c2 = (&x * ((&x + &self.n2 - BigUint::one()) % &self.n2)) >> 1;
        acc += (c2 % &self.n) * &self.n * &self.n;
        acc % &self.n3
    }

    pub fn validate_ct1(&self, c: &Ciphertext1) -> Result<()> {
        if c.0.is_zero() || c.0 >= self.n2 {
            return Err(Error::Ciphertext("layer-1 value out of range".into()));
        }
        if !c.0.gcd(&self.n).is_one() {
            return Err(Error::Ciphertext("layer-1 value shares a factor with N".into()));
        }
        Ok(())
    }

    pub fn validate_ct2(&self, c: &Ciphertext2) -> Result<()> {
        if c.0.is_zero() || c.0 >= self.n3 {
            return Err(Error::Ciphertext("layer-2 value out of range".into()));
        }
        Ok(())
    }

    /// Signed view: values in [0, N/2) are non-negative, (N/2, N) negative.
    pub fn encode_signed(&self, v: &BigInt) -> Result<BigUint> {
        let n = BigInt::from(self.n.clone());
        let mut r = v % &n;
        if r.is_negative() {
            r += &n;
        }
        let r = r.to_biguint().unwrap();
        Ok(r)
    }

    pub fn decode_signed(&self, v: &BigUint) -> BigInt {
        if v > &self.half_n {
            BigInt::from(v.clone()) - BigInt::from(self.n.clone())
        } else {
            BigInt::from(v.clone())
        }
    }
}

/// Generate a fresh keypair. `security_bits` is the modulus width; the test
/// profile floor is 256.
pub fn keygen(security_bits: u64, rng: &mut impl RngCore) -> Result<(PublicKey, SecretKey)> {
    if security_bits < 256 {
        return Err(Error::Key("modulus below the 256-bit test floor".into()));
    }
    if security_bits % 16 != 0 {
        return Err(Error::Key("modulus bit length must be a multiple of 16".into()));
    }
    for _ in 0..16 {
        let p = gen_prime(security_bits / 2, rng);
        let q = gen_prime(security_bits / 2, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != security_bits {
            continue;
        }
        let lambda = (&p - BigUint::one()).lcm(&(&q - BigUint::one()));
        if !lambda.gcd(&n).is_one() {
            continue;
        }
        let pk = PublicKey::from_modulus(security_bits, n)?;
        let sk = SecretKey::from_factors(p, q, pk)?;
        return Ok((sk.pk.clone(), sk));
    }
    Err(Error::Key("prime generation failed after bounded retries".into()))
}

impl SecretKey {
    pub fn from_factors(p: BigUint, q: BigUint, pk: PublicKey) -> Result<Self> {
        if &p * &q != pk.n {
            return Err(Error::Key("factors do not match the public modulus".into()));
        }
        let p2 = &p * &p;
        let q2 = &q * &q;
        let g = BigUint::one() + &pk.n;
        let lp = |x: &BigUint, m: &BigUint| (x - BigUint::one()) / m;
        let hp_raw = lp(&g.modpow(&(&p - BigUint::one()), &p2), &p) % &p;
        let hq_raw = lp(&g.modpow(&(&q - BigUint::one()), &q2), &q) % &q;
        let hp = modinv(&hp_raw, &p).ok_or_else(|| Error::Key("degenerate p".into()))?;
        let hq = modinv(&hq_raw, &q).ok_or_else(|| Error::Key("degenerate q".into()))?;
        let p_inv_q = modinv(&p, &q).ok_or_else(|| Error::Key("p not invertible mod q".into()))?;
        let lambda = (&p - BigUint::one()).lcm(&(&q - BigUint::one()));
        let mu2 = modinv(&lambda, &pk.n2)
            .ok_or_else(|| Error::Key("lambda not invertible mod N²".into()))?;
        let inv2_n2 = modinv(&BigUint::from(2u32), &pk.n2).unwrap();
        Ok(SecretKey { p, q, pk, p2, q2, hp, hq, p_inv_q, lambda, mu2, inv2_n2 })
    }
}

/// Layer-1 encryption with a fresh full-width randomizer.
pub fn enc1(pk: &PublicKey, m: &BigUint, rng: &mut impl RngCore) -> Result<Ciphertext1> {
    if m >= &pk.n {
        return Err(Error::Domain("plaintext outside Z_N".into()));
    }
    let r = sample_unit(rng, &pk.n);
    let c = pk.msg_part1(m) * r.modpow(&pk.n, &pk.n2) % &pk.n2;
    Ok(Ciphertext1(c))
}

pub fn dec1(sk: &SecretKey, c: &Ciphertext1) -> Result<BigUint> {
    sk.pk.validate_ct1(c)?;
    let lp = |x: &BigUint, m: &BigUint| (x - BigUint::one()) / m;
    let cp = &c.0 % &sk.p2;
    let cq = &c.0 % &sk.q2;
    let mp = lp(&cp.modpow(&(&sk.p - BigUint::one()), &sk.p2), &sk.p) * &sk.hp % &sk.p;
    let mq = lp(&cq.modpow(&(&sk.q - BigUint::one()), &sk.q2), &sk.q) * &sk.hq % &sk.q;
    let diff = ((&mq + &sk.q) - (&mp % &sk.q)) % &sk.q;
    Ok(&mp + &sk.p * (diff * &sk.p_inv_q % &sk.q))
}

/// Layer-2 encryption of a residue in Z_{N²}. Encrypting a layer-1
/// ciphertext's value treats it as a plaintext in the second layer.
pub fn enc2(pk: &PublicKey, x: &BigUint, rng: &mut impl RngCore) -> Result<Ciphertext2> {
    if x >= &pk.n2 {
        return Err(Error::Domain("layer-2 plaintext outside Z_{N²}".into()));
    }
    let r = sample_unit(rng, &pk.n);
    let c = pk.msg_part2(x) * r.modpow(&pk.n2, &pk.n3) % &pk.n3;
    Ok(Ciphertext2(c))
}

/// Strip the layer-2 encryption, returning the residue in Z_{N²}.
pub fn dec2(sk: &SecretKey, c: &Ciphertext2) -> Result<BigUint> {
    sk.pk.validate_ct2(c)?;
    let w = c.0.modpow(&sk.lambda, &sk.pk.n3);
    // Discrete log of (1+N)^y mod N³, s = 2 extraction.
    let n = &sk.pk.n;
    let n2 = &sk.pk.n2;
    let lp = |x: &BigUint| (x - BigUint::one()) / n;
    let y1 = lp(&(&w % n2)) % n;
    let t1 = lp(&w) % n2;
    let t2 = &y1 * ((&y1 + n2 - BigUint::one()) % n2) % n2;
    let y = ((&t1 + n2 - (t2 * n * &sk.inv2_n2 % n2)) % n2) % n2;
    Ok(y * &sk.mu2 % n2)
}

/// Homomorphic addition: decrypts to a+b mod N.
pub fn add1(pk: &PublicKey, a: &Ciphertext1, b: &Ciphertext1) -> Ciphertext1 {
    Ciphertext1(&a.0 * &b.0 % &pk.n2)
}

/// Scalar multiplication: decrypts to k·x mod N. k = N−1 negates.
pub fn scal1(pk: &PublicKey, c: &Ciphertext1, k: &BigUint) -> Ciphertext1 {
    Ciphertext1(c.0.modpow(k, &pk.n2))
}

pub fn neg1(pk: &PublicKey, c: &Ciphertext1) -> Ciphertext1 {
    // c^{-1} mod N² encrypts -x; cheaper than exponentiation by N-1.
    Ciphertext1(modinv(&c.0, &pk.n2).expect("ciphertext is a unit"))
}

pub fn sub1(pk: &PublicKey, a: &Ciphertext1, b: &Ciphertext1) -> Ciphertext1 {
    add1(pk, a, &neg1(pk, b))
}

/// Add a known value to a ciphertext without fresh randomness
/// (multiplication by the trivial encryption 1+vN).
pub fn add_plain1(pk: &PublicKey, c: &Ciphertext1, v: &BigUint) -> Ciphertext1 {
    Ciphertext1(&c.0 * pk.msg_part1(&(v % &pk.n)) % &pk.n2)
}

pub fn add2(pk: &PublicKey, a: &Ciphertext2, b: &Ciphertext2) -> Ciphertext2 {
    Ciphertext2(&a.0 * &b.0 % &pk.n3)
}

pub fn neg2(pk: &PublicKey, c: &Ciphertext2) -> Ciphertext2 {
    Ciphertext2(modinv(&c.0, &pk.n3).expect("ciphertext is a unit"))
}

/// The layered identity: `Etwo(Enc(m1))^Enc(m2) = Etwo(Enc(m1+m2))`.
/// More generally multiplies the outer plaintext by the exponent.
pub fn layered_exp(pk: &PublicKey, outer: &Ciphertext2, inner: &Ciphertext1) -> Ciphertext2 {
    Ciphertext2(outer.0.modpow(&inner.0, &pk.n3))
}

/// Layer-2 encryption with the trivial randomizer (r = 1). Used inside
/// S1-local homomorphic gadgets whose results are always blinded before
/// anyone else sees them.
pub fn trivial_enc2(pk: &PublicKey, x: &BigUint) -> Ciphertext2 {
    Ciphertext2(pk.msg_part2(x))
}

/// Raise a layer-2 ciphertext to an arbitrary exponent (outer-plaintext
/// scalar multiplication).
pub fn scal2(pk: &PublicKey, outer: &Ciphertext2, k: &BigUint) -> Ciphertext2 {
    Ciphertext2(outer.0.modpow(k, &pk.n3))
}

impl Ciphertext1 {
    pub fn to_bytes(&self, pk: &PublicKey) -> Vec<u8> {
        to_fixed_be(&self.0, pk.ct1_width())
    }

    pub fn from_bytes(pk: &PublicKey, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != pk.ct1_width() {
            return Err(Error::Format(format!(
                "layer-1 ciphertext must be {} bytes, got {}",
                pk.ct1_width(),
                bytes.len()
            )));
        }
        let c = Ciphertext1(BigUint::from_bytes_be(bytes));
        pk.validate_ct1(&c)?;
        Ok(c)
    }
}

impl Ciphertext2 {
    pub fn to_bytes(&self, pk: &PublicKey) -> Vec<u8> {
        to_fixed_be(&self.0, pk.ct2_width())
    }

    pub fn from_bytes(pk: &PublicKey, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != pk.ct2_width() {
            return Err(Error::Format(format!(
                "layer-2 ciphertext must be {} bytes, got {}",
                pk.ct2_width(),
                bytes.len()
            )));
        }
        let c = Ciphertext2(BigUint::from_bytes_be(bytes));
        pk.validate_ct2(&c)?;
        Ok(c)
    }
}

/// Session-local pool of precomputed randomizer-subgroup elements.
///
/// Fresh randomizers are random subset products of the pool, which turns the
/// ~300µs exponentiation per re-randomization into a handful of modular
/// multiplications. Pools are seeded so party transcripts stay reproducible.
/// The public `enc1`/`enc2` keep full-width randomness; pools are for the
/// protocol-internal blinding and re-randomization traffic.
pub struct Randomizer {
    pk: PublicKey,
    pool1: Vec<BigUint>,
    pool2: Vec<BigUint>,
}

const POOL_SIZE: usize = 128;
const POOL_PICKS: usize = 12;

impl Randomizer {
    pub fn new(pk: &PublicKey, rng: &mut impl RngCore) -> Self {
        let pool1 = (0..POOL_SIZE)
            .map(|_| pk.g1.modpow(&sample_bits(rng, 256), &pk.n2))
            .collect();
        let pool2 = (0..POOL_SIZE)
            .map(|_| pk.g2.modpow(&sample_bits(rng, 256), &pk.n3))
            .collect();
        Randomizer { pk: pk.clone(), pool1, pool2 }
    }

    fn draw(pool: &[BigUint], m: &BigUint, rng: &mut impl RngCore) -> BigUint {
        let mut acc = BigUint::one();
        for _ in 0..POOL_PICKS {
            let i = (rng.next_u32() as usize) % pool.len();
            acc = acc * &pool[i] % m;
        }
        acc
    }

    pub fn factor1(&self, rng: &mut impl RngCore) -> BigUint {
        Self::draw(&self.pool1, &self.pk.n2, rng)
    }

    pub fn factor2(&self, rng: &mut impl RngCore) -> BigUint {
        Self::draw(&self.pool2, &self.pk.n3, rng)
    }

    pub fn enc1(&self, m: &BigUint, rng: &mut impl RngCore) -> Ciphertext1 {
        Ciphertext1(self.pk.msg_part1(&(m % &self.pk.n)) * self.factor1(rng) % &self.pk.n2)
    }

    pub fn enc2(&self, x: &BigUint, rng: &mut impl RngCore) -> Ciphertext2 {
        Ciphertext2(self.pk.msg_part2(x) * self.factor2(rng) % &self.pk.n3)
    }

    pub fn rerand1(&self, c: &Ciphertext1, rng: &mut impl RngCore) -> Ciphertext1 {
        Ciphertext1(&c.0 * self.factor1(rng) % &self.pk.n2)
    }

    pub fn rerand2(&self, c: &Ciphertext2, rng: &mut impl RngCore) -> Ciphertext2 {
        Ciphertext2(&c.0 * self.factor2(rng) % &self.pk.n3)
    }
}

/// Key serialization: length-prefixed big-endian integer bundles.
pub fn int_bundle(ints: &[&BigUint]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(ints.len() as u32).to_be_bytes());
    for v in ints {
        let b = v.to_bytes_be();
        out.extend_from_slice(&(b.len() as u32).to_be_bytes());
        out.extend_from_slice(&b);
    }
    out
}

pub fn parse_int_bundle(bytes: &[u8]) -> Result<Vec<BigUint>> {
    let take = |buf: &[u8], at: usize, len: usize| -> Result<Vec<u8>> {
        buf.get(at..at + len)
            .map(|s| s.to_vec())
            .ok_or_else(|| Error::Format("truncated integer bundle".into()))
    };
    let count = u32::from_be_bytes(
        take(bytes, 0, 4)?
            .try_into()
            .map_err(|_| Error::Format("bad bundle header".into()))?,
    ) as usize;
    if count > 64 {
        return Err(Error::Format("implausible bundle count".into()));
    }
    let mut at = 4;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32::from_be_bytes(take(bytes, at, 4)?.try_into().unwrap()) as usize;
        at += 4;
        if len > 1 << 20 {
            return Err(Error::Format("implausible integer length".into()));
        }
        out.push(BigUint::from_bytes_be(&take(bytes, at, len)?));
        at += len;
    }
    if at != bytes.len() {
        return Err(Error::Format("trailing bytes in integer bundle".into()));
    }
    Ok(out)
}

/// Uniform plaintext in Z_N.
pub fn random_plaintext(pk: &PublicKey, rng: &mut impl RngCore) -> BigUint {
    sample_below(rng, &pk.n)
}

#[doc(hidden)]
pub mod testkit {
    //! Deterministic key material shared by the test suites.
    use super::*;
    use std::sync::OnceLock;

    static KEYS: OnceLock<(PublicKey, SecretKey)> = OnceLock::new();

    pub fn keys512() -> &'static (PublicKey, SecretKey) {
        KEYS.get_or_init(|| {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0x5ec7_0b1c);
            keygen(512, &mut rng).expect("test keygen")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    #[test]
    fn roundtrip_identity_and_boundary() {
        let (pk, sk) = testkit::keys512().clone();
        let mut r = rng();
        for m in [BigUint::zero(), BigUint::one(), &pk.n - BigUint::one()] {
            let c = enc1(&pk, &m, &mut r).unwrap();
            assert_eq!(dec1(&sk, &c).unwrap(), m);
        }
    }

    #[test]
    fn probabilistic_encryption() {
        let (pk, _) = testkit::keys512();
        let mut r = rng();
        let m = BigUint::from(5u32);
        let a = enc1(pk, &m, &mut r).unwrap();
        let b = enc1(pk, &m, &mut r).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn additive_homomorphism() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        for _ in 0..64 {
            let a = random_plaintext(pk, &mut r);
            let b = random_plaintext(pk, &mut r);
            let c = add1(pk, &enc1(pk, &a, &mut r).unwrap(), &enc1(pk, &b, &mut r).unwrap());
            assert_eq!(dec1(sk, &c).unwrap(), (&a + &b) % &pk.n);
        }
    }

    #[test]
    fn scalar_law_and_negation() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        for _ in 0..32 {
            let x = random_plaintext(pk, &mut r);
            let k = random_plaintext(pk, &mut r);
            let c = enc1(pk, &x, &mut r).unwrap();
            assert_eq!(dec1(sk, &scal1(pk, &c, &k)).unwrap(), &k * &x % &pk.n);
        }
        let x = BigUint::from(17u32);
        let c = enc1(pk, &x, &mut r).unwrap();
        let neg = dec1(sk, &neg1(pk, &c)).unwrap();
        assert_eq!(neg, &pk.n - &x);
        // scal by 0 and 1
        assert!(dec1(sk, &scal1(pk, &c, &BigUint::zero())).unwrap().is_zero());
        assert_eq!(dec1(sk, &scal1(pk, &c, &BigUint::one())).unwrap(), x);
    }

    #[test]
    fn layer2_roundtrip_including_wrapped_ct() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let c0 = enc2(pk, &BigUint::zero(), &mut r).unwrap();
        assert!(dec2(sk, &c0).unwrap().is_zero());
        let inner = enc1(pk, &BigUint::from(7u32), &mut r).unwrap();
        let wrapped = enc2(pk, &inner.0, &mut r).unwrap();
        assert_eq!(dec2(sk, &wrapped).unwrap(), inner.0);
        for _ in 0..32 {
            let x = sample_below(&mut r, &pk.n2);
            let c = enc2(pk, &x, &mut r).unwrap();
            assert_eq!(dec2(sk, &c).unwrap(), x);
        }
    }

    #[test]
    fn layer2_domain_guard() {
        let (pk, _) = testkit::keys512();
        let mut r = rng();
        assert!(enc2(pk, &pk.n2, &mut r).is_err());
    }

    #[test]
    fn layered_identity() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        // (3,4) double-decrypts to 7
        let inner1 = enc1(pk, &BigUint::from(3u32), &mut r).unwrap();
        let outer = enc2(pk, &inner1.0, &mut r).unwrap();
        let inner2 = enc1(pk, &BigUint::from(4u32), &mut r).unwrap();
        let res = layered_exp(pk, &outer, &inner2);
        let stripped = Ciphertext1(dec2(sk, &res).unwrap());
        assert_eq!(dec1(sk, &stripped).unwrap(), BigUint::from(7u32));
        for _ in 0..16 {
            let m1 = random_plaintext(pk, &mut r);
            let m2 = random_plaintext(pk, &mut r);
            let outer = enc2(pk, &enc1(pk, &m1, &mut r).unwrap().0, &mut r).unwrap();
            let e = enc1(pk, &m2, &mut r).unwrap();
            let stripped = Ciphertext1(dec2(sk, &layered_exp(pk, &outer, &e)).unwrap());
            assert_eq!(dec1(sk, &stripped).unwrap(), (&m1 + &m2) % &pk.n);
        }
    }

    #[test]
    fn signed_view() {
        let (pk, _) = testkit::keys512();
        for v in [-1i64, -1234, 0, 1, 99999] {
            let enc = pk.encode_signed(&BigInt::from(v)).unwrap();
            assert_eq!(pk.decode_signed(&enc), BigInt::from(v));
        }
    }

    #[test]
    fn invalid_ciphertext_rejected() {
        let (pk, sk) = testkit::keys512();
        let bad = Ciphertext1(pk.n.clone()); // shares factor set with N
        assert!(dec1(sk, &bad).is_err());
    }

    #[test]
    fn randomizer_pool_encrypts_correctly() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let pool = Randomizer::new(pk, &mut r);
        for _ in 0..16 {
            let m = random_plaintext(pk, &mut r);
            assert_eq!(dec1(sk, &pool.enc1(&m, &mut r)).unwrap(), m);
            let c = enc1(pk, &m, &mut r).unwrap();
            let c2 = pool.rerand1(&c, &mut r);
            assert_ne!(c, c2);
            assert_eq!(dec1(sk, &c2).unwrap(), m);
        }
        let x = sample_below(&mut r, &pk.n2);
        assert_eq!(dec2(sk, &pool.enc2(&x, &mut r)).unwrap(), x);
    }

    #[test]
    fn add_plain_matches_add() {
        let (pk, sk) = testkit::keys512();
        let mut r = rng();
        let x = random_plaintext(pk, &mut r);
        let v = random_plaintext(pk, &mut r);
        let c = enc1(pk, &x, &mut r).unwrap();
        assert_eq!(dec1(sk, &add_plain1(pk, &c, &v)).unwrap(), (&x + &v) % &pk.n);
    }

    #[test]
    fn ciphertext_bytes_roundtrip() {
        let (pk, _) = testkit::keys512();
        let mut r = rng();
        let c = enc1(pk, &BigUint::from(9u32), &mut r).unwrap();
        let b = c.to_bytes(pk);
        assert_eq!(b.len(), pk.ct1_width());
        assert_eq!(Ciphertext1::from_bytes(pk, &b).unwrap(), c);
        let c2 = enc2(pk, &BigUint::from(9u32), &mut r).unwrap();
        let b2 = c2.to_bytes(pk);
        assert_eq!(b2.len(), pk.ct2_width());
        assert_eq!(Ciphertext2::from_bytes(pk, &b2).unwrap(), c2);
    }

    #[test]
    fn int_bundle_roundtrip_and_truncation() {
        let a = BigUint::from(123456u32);
        let b = BigUint::from(7u32);
        let bytes = int_bundle(&[&a, &b]);
        assert_eq!(parse_int_bundle(&bytes).unwrap(), vec![a, b]);
        assert!(parse_int_bundle(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_int_bundle(&bytes[..3]).is_err());
    }
}
