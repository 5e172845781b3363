//! The oblivious equi-join: every pair of tuples is combined in random
//! order; a value-equality indicator gates the score (via the layered
//! identity and recovery) and every projected attribute (via blinded
//! products). Non-matching pairs carry all-zero payloads, which the filter
//! exchange then drops: S1 multiplicatively blinds scores (zero-preserving)
//! and additively blinds attributes, S2 decrypts the blinded scores, drops
//! the zeros, re-blinds the survivors and folds its randomness into S1's
//! envelope, and both sides end up knowing only the join cardinality.

use super::base::{blind_products, eq_batch, recover_batch, ProductTerm};
use super::{read_ct1, write_ct1, S1Keys};
use crate::bigint::sample_below;
use crate::channel::Session;
use crate::crypto::{add1, add_plain1, neg1, scal1, Ciphertext1};
use crate::ehl::ehl_sub;
use crate::error::{Error, Result};
use crate::store::{EncryptedRelation, ErKind, JoinToken};
use crate::wire::{self, PayloadReader, PayloadWriter};
use num_bigint::BigUint;
use num_traits::One;
use rand::RngCore;

/// One combined tuple: the gated score (`x + y + 1` for matches, 0
/// otherwise) and the gated projected attributes of both sides.
#[derive(Debug, Clone)]
pub struct EncTuple {
    pub score: Ciphertext1,
    pub attrs: Vec<Ciphertext1>,
}

/// Combine all n1·n2 tuple pairs in random order. The +1 score offset
/// keeps genuine zero-score matches distinguishable from non-matches; the
/// engine corrects it after filtering.
pub fn sec_join(
    sess: &mut Session,
    keys: &S1Keys,
    er1: &EncryptedRelation,
    er2: &EncryptedRelation,
    token: &JoinToken,
    rng: &mut impl RngCore,
) -> Result<Vec<EncTuple>> {
    let pk = &keys.pk;
    if er1.meta.kind != ErKind::Join || er2.meta.kind != ErKind::Join {
        return Err(Error::Usage("join needs join-encrypted relations".into()));
    }
    let m1 = er1.meta.m as usize;
    let m2 = er2.meta.m as usize;
    for (t, m) in [(token.t1, m1), (token.t3, m1), (token.t2, m2), (token.t4, m2)] {
        if t as usize >= m {
            return Err(Error::Usage("token attribute out of range".into()));
        }
    }
    let score_width = er1.meta.score_width.max(er2.meta.score_width) as u64 + 2;

    let mut pairs: Vec<(usize, usize)> = (0..er1.lists.len())
        .flat_map(|i| (0..er2.lists.len()).map(move |j| (i, j)))
        .collect();
    for i in (1..pairs.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        pairs.swap(i, j);
    }

    let mut diffs = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let a = &er1.lists[i][token.t1 as usize].ehl;
        let b = &er2.lists[j][token.t2 as usize].ehl;
        diffs.push(ehl_sub(pk, a, b, rng)?);
    }
    let indicators = eq_batch(sess, pk, &diffs)?;

    // gated scores through the layered select + recovery
    let mut wrapped = Vec::with_capacity(pairs.len());
    for (&(i, j), (t2, _)) in pairs.iter().zip(&indicators) {
        let sum = add_plain1(
            pk,
            &add1(
                pk,
                &er1.lists[i][token.t3 as usize].score,
                &er2.lists[j][token.t4 as usize].score,
            ),
            &BigUint::one(),
        );
        wrapped.push(super::worstbest::select_zero_or(pk, t2, &sum));
    }
    let scores = recover_batch(sess, keys, &wrapped, rng)?;

    // gated projected attributes through blinded products
    let mut product_terms = Vec::new();
    for (&(i, j), (_, t1)) in pairs.iter().zip(&indicators) {
        for cell in er1.lists[i].iter().chain(er2.lists[j].iter()) {
            product_terms.push((
                ProductTerm { ct: t1, width_bits: 1 },
                ProductTerm { ct: &cell.score, width_bits: score_width },
            ));
        }
    }
    let gated = blind_products(sess, keys, &product_terms, rng)?;

    let attr_count = m1 + m2;
    let mut out = Vec::with_capacity(pairs.len());
    for (idx, score) in scores.into_iter().enumerate() {
        let attrs = gated[idx * attr_count..(idx + 1) * attr_count].to_vec();
        out.push(EncTuple { score, attrs });
    }
    Ok(out)
}

/// Drop non-matching tuples. Returns the unblinded survivors; the output
/// length (the join cardinality) is the only thing either side learns.
pub fn sec_filter(
    sess: &mut Session,
    keys: &S1Keys,
    tuples: &[EncTuple],
    rng: &mut impl RngCore,
) -> Result<Vec<EncTuple>> {
    let pk = &keys.pk;
    if tuples.is_empty() {
        return Ok(Vec::new());
    }
    let attr_count = tuples[0].attrs.len();
    if tuples.iter().any(|t| t.attrs.len() != attr_count) {
        return Err(Error::Domain("inhomogeneous tuples".into()));
    }

    let mut order: Vec<usize> = (0..tuples.len()).collect();
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }

    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u32(tuples.len() as u32);
    w.put_u16(attr_count as u16);
    for &idx in &order {
        let t = &tuples[idx];
        // multiplicative blind preserves zero scores; draw until invertible
        let r_mult = crate::bigint::sample_unit(rng, &pk.n);
        let r_inv = crate::bigint::modinv(&r_mult, &pk.n).expect("unit");
        let blinded_score = scal1(pk, &t.score, &r_mult);
        write_ct1(&mut w, pk, &blinded_score);
        let mut adds = Vec::with_capacity(attr_count);
        for a in &t.attrs {
            let r_add = sample_below(rng, &pk.n);
            write_ct1(&mut w, pk, &add_plain1(pk, a, &r_add));
            adds.push(r_add);
        }
        // envelope under S1's own key: the score unblinder and the additive blinds
        let env_ri = keys.own_pool.enc1(&r_inv, rng);
        w.put_bytes(&env_ri.to_bytes(&keys.own_pk));
        for r_add in &adds {
            let env = keys.own_pool.enc1(r_add, rng);
            w.put_bytes(&env.to_bytes(&keys.own_pk));
        }
    }

    let reply = sess.exchange(wire::TAG_FILTER_REQ, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    let kept = r.u32()? as usize;
    if kept > tuples.len() {
        return Err(Error::Protocol("filter grew the list".into()));
    }
    let mut out = Vec::with_capacity(kept);
    for _ in 0..kept {
        let score_blinded = read_ct1(&mut r, pk)?;
        let mut attrs_blinded = Vec::with_capacity(attr_count);
        for _ in 0..attr_count {
            attrs_blinded.push(read_ct1(&mut r, pk)?);
        }
        let env_ri = Ciphertext1::from_bytes(&keys.own_pk, r.bytes(keys.own_pk.ct1_width())?)?;
        let r_inv = crate::crypto::dec1(&keys.own_sk, &env_ri)? % &pk.n;
        let score = scal1(pk, &score_blinded, &r_inv);
        let mut attrs = Vec::with_capacity(attr_count);
        for a in attrs_blinded {
            let env = Ciphertext1::from_bytes(&keys.own_pk, r.bytes(keys.own_pk.ct1_width())?)?;
            let total = crate::crypto::dec1(&keys.own_sk, &env)? % &pk.n;
            attrs.push(add_plain1(pk, &a, &((&pk.n - total) % &pk.n)));
        }
        out.push(EncTuple { score, attrs });
    }
    r.finish()?;
    Ok(out)
}

/// Multiplicative blind then inverse restores the plaintext — the algebra
/// the filter's unblinding rests on.
pub fn mult_blind_roundtrip(
    pk: &crate::crypto::PublicKey,
    c: &Ciphertext1,
    r_mult: &BigUint,
) -> Result<Ciphertext1> {
    let r_inv = crate::bigint::modinv(r_mult, &pk.n)
        .ok_or_else(|| Error::Domain("blind not invertible".into()))?;
    Ok(scal1(pk, &scal1(pk, c, r_mult), &r_inv))
}

// the filter envelope layout per tuple: score ct1 | attr ct1 × attr_count |
// env(r⁻¹) | env(R) × attr_count — S2 reads it with the same offsets
pub(crate) fn filter_tuple_width(pk_w: usize, own_w: usize, attr_count: usize) -> usize {
    pk_w * (1 + attr_count) + own_w * (1 + attr_count)
}

#[allow(unused_imports)]
use super::worstbest;
