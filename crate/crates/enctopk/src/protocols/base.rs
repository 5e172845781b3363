//! Session setup and the four primitive exchanges everything else builds
//! on: the equality→indicator round, layer stripping (RecoverEnc), blinded
//! comparison (EncCompare), and the blinded-product round.

use super::{read_ct1, write_ct1, S1Keys};
use crate::bigint::sample_bits;
use crate::channel::Session;
use crate::crypto::{
    add_plain1, int_bundle, layered_exp, neg1, scal1, Ciphertext1, Ciphertext2, PublicKey,
};
use crate::error::{Error, Result};
use crate::wire::{self, PayloadReader, PayloadWriter};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, RngCore};

/// Statistical hiding margin for width-bounded blinds, in bits.
pub const STAT_BITS: u64 = 81;

/// Multiplicative comparison blind width (design: κ = 40).
pub const CMP_BLIND_BITS: u64 = 40;

/// Announce the shared key fingerprint and S1's own public key.
pub fn hello(sess: &mut Session, keys: &S1Keys) -> Result<()> {
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u16(keys.pk.bits as u16);
    w.put_bytes(&keys.pk.fingerprint());
    w.put_u16(keys.own_pk.bits as u16);
    w.put_var_bytes(&int_bundle(&[&keys.own_pk.n]));
    let reply = sess.exchange(wire::TAG_HELLO, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    if r.u8()? != 1 {
        return Err(Error::Protocol("peer rejected hello".into()));
    }
    r.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupMode {
    /// Void duplicates in place with sentinel records (full privacy).
    Sentinel,
    /// Remove duplicates, revealing per-depth distinct counts to S1.
    Eliminate,
}

impl DedupMode {
    pub(crate) fn to_u8(self) -> u8 {
        match self {
            DedupMode::Sentinel => 0,
            DedupMode::Eliminate => 1,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(DedupMode::Sentinel),
            1 => Ok(DedupMode::Eliminate),
            _ => Err(Error::Format("unknown dedup mode".into())),
        }
    }
}

/// Open a query scope on the S2 side: resets its per-query scratch and
/// announces the queried attribute count and the score-sum width (which
/// bounds every genuine worst/best value).
pub fn query_start(sess: &mut Session, pk: &PublicKey, m: usize, sum_width_bits: u64) -> Result<()> {
    if sum_width_bits + 2 * STAT_BITS + CMP_BLIND_BITS + 4 > pk.bits {
        return Err(Error::Domain("score width leaves no blinding headroom".into()));
    }
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u16(m as u16);
    w.put_u16(sum_width_bits as u16);
    let reply = sess.exchange(wire::TAG_QUERY_START, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    if r.u8()? != 1 {
        return Err(Error::Protocol("peer rejected query".into()));
    }
    r.finish()
}

/// The equality→indicator round shared by the worst/best/update/join
/// protocols: S1 sends ⊖ results, S2 decrypts each and answers with the
/// indicator bit t = [b = 0] encrypted at both layers.
pub fn eq_batch(
    sess: &mut Session,
    pk: &PublicKey,
    operands: &[Ciphertext1],
) -> Result<Vec<(Ciphertext2, Ciphertext1)>> {
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u32(operands.len() as u32);
    for c in operands {
        write_ct1(&mut w, pk, c);
    }
    let reply = sess.exchange(wire::TAG_EQ_BATCH, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    let count = r.count(pk.ct2_width() + pk.ct1_width())?;
    if count != operands.len() {
        return Err(Error::Protocol("indicator count mismatch".into()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t2 = Ciphertext2::from_bytes(pk, r.bytes(pk.ct2_width())?)?;
        let t1 = read_ct1(&mut r, pk)?;
        out.push((t2, t1));
    }
    r.finish()?;
    Ok(out)
}

/// Strip one layer of encryption from each wrapped ciphertext: S1 blinds
/// the inner plaintext with a fresh uniform addend, S2 removes the outer
/// layer, S1 subtracts the blind. S2 sees only uniformly blinded values.
pub fn recover_batch(
    sess: &mut Session,
    keys: &S1Keys,
    wrapped: &[Ciphertext2],
    rng: &mut impl RngCore,
) -> Result<Vec<Ciphertext1>> {
    let pk = &keys.pk;
    let mut blinds = Vec::with_capacity(wrapped.len());
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u32(wrapped.len() as u32);
    for c in wrapped {
        let rho = crate::crypto::random_plaintext(pk, rng);
        let enc_rho = keys.pool.enc1(&rho, rng);
        let blinded = layered_exp(pk, c, &enc_rho);
        w.put_bytes(&blinded.to_bytes(pk));
        blinds.push(enc_rho);
    }
    let reply = sess.exchange(wire::TAG_RECOVER_BATCH, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    let count = r.count(pk.ct1_width())?;
    if count != wrapped.len() {
        return Err(Error::Protocol("recover count mismatch".into()));
    }
    let mut out = Vec::with_capacity(count);
    for enc_rho in blinds {
        let c = read_ct1(&mut r, pk)?;
        out.push(crate::crypto::add1(pk, &c, &neg1(pk, &enc_rho)));
    }
    r.finish()?;
    Ok(out)
}

/// Single-value RecoverEnc, as used directly by tests and the layered ops.
pub fn recover_enc(
    sess: &mut Session,
    keys: &S1Keys,
    wrapped: &Ciphertext2,
    rng: &mut impl RngCore,
) -> Result<Ciphertext1> {
    Ok(recover_batch(sess, keys, std::slice::from_ref(wrapped), rng)?.pop().unwrap())
}

/// Batched EncCompare: for each (a, b) S1 learns the bit f = (a ≤ b).
/// Values must be within the signed-view comparison domain announced at
/// query start. S2 sees only coin-flipped multiplicatively blinded
/// differences; exact ties are visible to S2 (declared leakage).
pub fn compare_batch(
    sess: &mut Session,
    pk: &PublicKey,
    pairs: &[(&Ciphertext1, &Ciphertext1)],
    rng: &mut impl RngCore,
) -> Result<Vec<bool>> {
    let mut coins = Vec::with_capacity(pairs.len());
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u32(pairs.len() as u32);
    for (a, b) in pairs {
        let diff = crate::crypto::sub1(pk, a, b);
        let mut r_blind = sample_bits(rng, CMP_BLIND_BITS);
        if r_blind.is_zero() {
            r_blind = BigUint::one();
        }
        let coin: bool = rng.gen();
        let mut blinded = scal1(pk, &diff, &r_blind);
        if coin {
            blinded = neg1(pk, &blinded);
        }
        write_ct1(&mut w, pk, &blinded);
        coins.push(coin);
    }
    let reply = sess.exchange(wire::TAG_CMP_BATCH, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    let count = r.count(1)?;
    if count != pairs.len() {
        return Err(Error::Protocol("compare count mismatch".into()));
    }
    let mut out = Vec::with_capacity(count);
    for coin in coins {
        let sign = r.u8()?;
        // 2 = zero (a = b), 1 = negative, 0 = positive
        let f = match sign {
            2 => true,
            1 => !coin,
            0 => coin,
            v => return Err(Error::Protocol(format!("bad sign byte {v}"))),
        };
        out.push(f);
    }
    r.finish()?;
    Ok(out)
}

pub fn enc_compare(
    sess: &mut Session,
    pk: &PublicKey,
    a: &Ciphertext1,
    b: &Ciphertext1,
    rng: &mut impl RngCore,
) -> Result<bool> {
    Ok(compare_batch(sess, pk, &[(a, b)], rng)?[0])
}

/// One factor of a blinded product: the ciphertext and a width bound (bits)
/// on its plaintext, which sizes the statistical blind.
pub struct ProductTerm<'a> {
    pub ct: &'a Ciphertext1,
    pub width_bits: u64,
}

/// Blinded-product round: for each pair S1 obtains Enc(u·v) where u, v stay
/// hidden from both sides (S2 multiplies statistically blinded plaintexts;
/// S1 strips the cross terms). Both factors must be width-bounded so the
/// blinded product cannot wrap mod N.
pub fn blind_products(
    sess: &mut Session,
    keys: &S1Keys,
    pairs: &[(ProductTerm, ProductTerm)],
    rng: &mut impl RngCore,
) -> Result<Vec<Ciphertext1>> {
    let pk = &keys.pk;
    let mut secrets = Vec::with_capacity(pairs.len());
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u32(pairs.len() as u32);
    for (u, v) in pairs {
        let sigma = sample_bits(rng, u.width_bits + STAT_BITS);
        let rho = sample_bits(rng, v.width_bits + STAT_BITS);
        if (u.width_bits + STAT_BITS) + (v.width_bits + STAT_BITS) + 2 >= pk.bits {
            return Err(Error::Domain("product widths exceed the modulus".into()));
        }
        let u_blind = add_plain1(pk, u.ct, &sigma);
        let v_blind = add_plain1(pk, v.ct, &rho);
        write_ct1(&mut w, pk, &u_blind);
        write_ct1(&mut w, pk, &v_blind);
        secrets.push((sigma, rho, u_blind, v_blind));
    }
    let reply = sess.exchange(wire::TAG_BLINDPROD_REQ, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    let count = r.count(pk.ct1_width())?;
    if count != pairs.len() {
        return Err(Error::Protocol("product count mismatch".into()));
    }
    let mut out = Vec::with_capacity(count);
    for (sigma, rho, u_blind, v_blind) in secrets {
        let p = read_ct1(&mut r, pk)?;
        // u·v = P − ρ(u+σ) − σ(v+ρ) + σρ
        let strip = crate::crypto::add1(pk, &scal1(pk, &u_blind, &rho), &scal1(pk, &v_blind, &sigma));
        let mut uv = crate::crypto::add1(pk, &p, &neg1(pk, &strip));
        uv = add_plain1(pk, &uv, &(sigma * rho % &pk.n));
        out.push(uv);
    }
    r.finish()?;
    Ok(out)
}

/// Close the query scope; S2 records the halting depth it observed.
pub fn query_end(sess: &mut Session) -> Result<()> {
    let w = PayloadWriter::new().ctx(sess.ctx());
    let reply = sess.exchange(wire::TAG_QUERY_END, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    r.finish()
}

pub fn shutdown(sess: &mut Session) -> Result<()> {
    sess.send_raw(wire::TAG_SHUTDOWN, PayloadWriter::new().ctx(sess.ctx()).finish())
}
