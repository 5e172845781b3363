//! De-duplication: S1 ships the pairwise ⊖ matrix plus blinded items and
//! their blind packs; S2 finds duplicate groups, keeps one member per
//! group, voids or removes the rest, re-blinds everything, and returns a
//! re-permuted list. S1 learns nothing about which positions changed; S2
//! learns the permuted equality matrix (the declared per-depth leakage).

use super::{
    apply_blinds, decode_pack, negate_blinds, read_item, read_pack, write_ct1, write_item,
    write_pack, Blinds, DedupMode, S1Keys, ScoredItem,
};
use crate::channel::Session;
use crate::crypto::Ciphertext1;
use crate::ehl::ehl_sub;
use crate::error::{Error, Result};
use crate::wire::{self, PayloadReader, PayloadWriter};
use rand::RngCore;

/// Blind one item's components under S1's own key, in item-block order.
fn encrypt_pack(keys: &S1Keys, blinds: &Blinds, rng: &mut impl RngCore) -> Vec<Ciphertext1> {
    blinds.values().iter().map(|v| keys.own_pool.enc1(v, rng)).collect()
}

/// Run the de-duplication exchange over scored items (optionally carrying
/// unseen-mask vectors). Returns the new list; its length equals the input
/// in sentinel mode and the distinct count in eliminate mode.
pub fn sec_dedup_items(
    sess: &mut Session,
    keys: &S1Keys,
    items: &[(ScoredItem, Vec<Ciphertext1>)],
    mode: DedupMode,
    rng: &mut impl RngCore,
) -> Result<Vec<(ScoredItem, Vec<Ciphertext1>)>> {
    let pk = &keys.pk;
    let l = items.len();
    if l == 0 {
        return Ok(Vec::new());
    }
    let slots = items[0].0.ehl.len();
    let mask_count = items[0].1.len();
    if items.iter().any(|(it, m)| it.ehl.len() != slots || m.len() != mask_count) {
        return Err(Error::Domain("inhomogeneous item list".into()));
    }

    // pairwise matrix over the original hash lists, upper triangle row-major
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u8(mode.to_u8());
    w.put_u32(l as u32);
    w.put_u16(slots as u16);
    w.put_u16(mask_count as u16);
    for i in 0..l {
        for j in i + 1..l {
            let d = ehl_sub(pk, &items[i].0.ehl, &items[j].0.ehl, rng)?;
            write_ct1(&mut w, pk, &d);
        }
    }
    // blinded items and their packs
    for (item, masks) in items {
        let blinds = Blinds::draw(&pk.n, slots, mask_count, rng);
        let (blinded, blinded_masks) = apply_blinds(pk, item, masks, &blinds)?;
        write_item(&mut w, pk, &blinded, &blinded_masks);
        write_pack(&mut w, &keys.own_pk, &encrypt_pack(keys, &blinds, rng));
    }

    let reply = sess.exchange(wire::TAG_DEDUP_REQ, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    let out_len = r.u32()? as usize;
    if out_len > l || (mode == DedupMode::Sentinel && out_len != l) {
        return Err(Error::Protocol("implausible dedup output length".into()));
    }
    let mut out = Vec::with_capacity(out_len);
    for _ in 0..out_len {
        let (item, masks) = read_item(&mut r, pk, slots, mask_count)?;
        let pack = read_pack(&mut r, &keys.own_pk, slots + 2 + mask_count)?;
        let blinds = decode_pack(keys, &pack, slots, mask_count)?;
        let (clean, clean_masks) = apply_blinds(pk, &item, &masks, &negate_blinds(&pk.n, &blinds))?;
        out.push((clean, clean_masks));
    }
    r.finish()?;
    Ok(out)
}

/// De-duplication with in-place sentinel voiding: same-length output,
/// exactly one genuine survivor per duplicate group, the rest replaced by
/// random-id records with worst = −1 (signed) and best = 0.
pub fn sec_dedup(
    sess: &mut Session,
    keys: &S1Keys,
    items: &[ScoredItem],
    rng: &mut impl RngCore,
) -> Result<Vec<ScoredItem>> {
    let wrapped: Vec<(ScoredItem, Vec<Ciphertext1>)> =
        items.iter().map(|i| (i.clone(), Vec::new())).collect();
    Ok(sec_dedup_items(sess, keys, &wrapped, DedupMode::Sentinel, rng)?
        .into_iter()
        .map(|(i, _)| i)
        .collect())
}

/// De-duplication by elimination: duplicates are removed, output length is
/// the number of distinct objects (visible to S1 — the uniqueness-pattern
/// leakage of the optimized mode).
pub fn sec_dupelim(
    sess: &mut Session,
    keys: &S1Keys,
    items: &[ScoredItem],
    rng: &mut impl RngCore,
) -> Result<Vec<ScoredItem>> {
    let wrapped: Vec<(ScoredItem, Vec<Ciphertext1>)> =
        items.iter().map(|i| (i.clone(), Vec::new())).collect();
    Ok(sec_dedup_items(sess, keys, &wrapped, DedupMode::Eliminate, rng)?
        .into_iter()
        .map(|(i, _)| i)
        .collect())
}

/// The blinding procedure: shift the hash list by ⊙ and the scores
/// additively. Applying it again with negated randomness restores the
/// underlying plaintexts.
pub fn rand_blind(
    pk: &crate::crypto::PublicKey,
    item: &ScoredItem,
    alphas: &[num_bigint::BigUint],
    beta: &num_bigint::BigUint,
    gamma: &num_bigint::BigUint,
) -> Result<ScoredItem> {
    let blinds = Blinds {
        alphas: alphas.to_vec(),
        beta: beta.clone(),
        gamma: gamma.clone(),
        deltas: Vec::new(),
    };
    Ok(apply_blinds(pk, item, &[], &blinds)?.0)
}
