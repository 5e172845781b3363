//! The secure update exchange: merge the deduplicated depth items Γ into
//! the running tracked list T. For every object in both, the worst score
//! accumulates the depth contribution, the best keeps T's (already
//! refreshed to current bottoms — numerically the depth-d best, since a
//! newly seen list's bottom *is* the object's score there), and the unseen
//! masks intersect. New objects are appended with their depth bounds;
//! superseded copies are voided in place (sentinel mode) or dropped
//! (eliminate mode). S2 performs the merge on blinded values and returns a
//! re-permuted list, folding its re-blinds into the packs.

use super::{
    apply_blinds, decode_pack, negate_blinds, read_item, read_pack, write_ct1, write_item,
    write_pack, Blinds, DedupMode, S1Keys, ScoredItem, TrackedItem,
};
use crate::channel::Session;
use crate::crypto::Ciphertext1;
use crate::ehl::ehl_sub;
use crate::error::{Error, Result};
use crate::wire::{self, PayloadReader, PayloadWriter};
use rand::RngCore;

/// One update round. `perm` maps true list index → shipped mask coordinate,
/// matching the permutation the depth items went through, so S2 can merge
/// masks without learning list identities. `cap` bounds |T| in sentinel
/// mode (excess sentinels are dropped; the cap is a public function of
/// depth and n).
pub fn sec_update(
    sess: &mut Session,
    keys: &S1Keys,
    t_items: &[TrackedItem],
    g_items: &[(ScoredItem, Vec<Ciphertext1>)],
    mode: DedupMode,
    cap: usize,
    perm: &[usize],
    rng: &mut impl RngCore,
) -> Result<Vec<TrackedItem>> {
    let pk = &keys.pk;
    let m = perm.len();
    let slots = g_items
        .first()
        .map(|(i, _)| i.ehl.len())
        .or_else(|| t_items.first().map(|t| t.item.ehl.len()))
        .ok_or_else(|| Error::Domain("empty update".into()))?;
    if g_items.iter().any(|(i, ms)| i.ehl.len() != slots || ms.len() != m)
        || t_items.iter().any(|t| t.item.ehl.len() != slots || t.masks.len() != m)
    {
        return Err(Error::Domain("inhomogeneous update inputs".into()));
    }

    let tau = t_items.len();
    let gamma = g_items.len();
    let mut w = PayloadWriter::new().ctx(sess.ctx());
    w.put_u8(mode.to_u8());
    w.put_u32(tau as u32);
    w.put_u32(gamma as u32);
    w.put_u32(cap as u32);
    w.put_u16(slots as u16);
    w.put_u16(m as u16);
    // match matrix Γ×T over the original hash lists, g-major
    for (g, _) in g_items {
        for t in t_items {
            let d = ehl_sub(pk, &g.ehl, &t.item.ehl, rng)?;
            write_ct1(&mut w, pk, &d);
        }
    }
    // blinded T block (masks shipped in permuted coordinates)
    for t in t_items {
        let shipped_masks = permute_masks(&t.masks, perm);
        let blinds = Blinds::draw(&pk.n, slots, m, rng);
        let (blinded, blinded_masks) = apply_blinds(pk, &t.item, &shipped_masks, &blinds)?;
        write_item(&mut w, pk, &blinded, &blinded_masks);
        write_pack(&mut w, &keys.own_pk, &encrypt_pack(keys, &blinds, rng));
    }
    // blinded Γ block (masks already in permuted coordinates)
    for (g, masks) in g_items {
        let blinds = Blinds::draw(&pk.n, slots, m, rng);
        let (blinded, blinded_masks) = apply_blinds(pk, g, masks, &blinds)?;
        write_item(&mut w, pk, &blinded, &blinded_masks);
        write_pack(&mut w, &keys.own_pk, &encrypt_pack(keys, &blinds, rng));
    }

    let reply = sess.exchange(wire::TAG_UPDATE_REQ, w.finish())?;
    let mut r = PayloadReader::new(&reply);
    r.ctx()?;
    let out_len = r.u32()? as usize;
    let expected = match mode {
        DedupMode::Sentinel => (tau + gamma).min(cap),
        DedupMode::Eliminate => usize::MAX, // distinct count, checked below
    };
    if mode == DedupMode::Sentinel && out_len != expected {
        return Err(Error::Protocol(format!(
            "update returned {out_len} items, expected {expected}"
        )));
    }
    if out_len > tau + gamma {
        return Err(Error::Protocol("update grew the list".into()));
    }
    let mut out = Vec::with_capacity(out_len);
    let inv = invert_perm(perm);
    for _ in 0..out_len {
        let (item, masks) = read_item(&mut r, pk, slots, m)?;
        let pack = read_pack(&mut r, &keys.own_pk, slots + 2 + m)?;
        let blinds = decode_pack(keys, &pack, slots, m)?;
        let (clean, clean_masks) = apply_blinds(pk, &item, &masks, &negate_blinds(&pk.n, &blinds))?;
        out.push(TrackedItem { item: clean, masks: permute_masks(&clean_masks, &inv) });
    }
    r.finish()?;
    Ok(out)
}

fn encrypt_pack(keys: &S1Keys, blinds: &Blinds, rng: &mut impl RngCore) -> Vec<Ciphertext1> {
    blinds.values().iter().map(|v| keys.own_pool.enc1(v, rng)).collect()
}

fn permute_masks(masks: &[Ciphertext1], perm: &[usize]) -> Vec<Ciphertext1> {
    let mut out = vec![Ciphertext1(num_bigint::BigUint::from(1u32)); masks.len()];
    for (true_idx, &shipped) in perm.iter().enumerate() {
        out[shipped] = masks[true_idx].clone();
    }
    out
}

fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
