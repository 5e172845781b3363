//! Worst and best score protocols. The worst score of an item is the sum of
//! same-depth scores of equal objects; the best score adds, per other list,
//! either the object's known score there or the list's current bottom.
//! Both are computed with the equality→indicator round plus layered
//! selection and recovery — S2 sees only permuted equality bits and blinded
//! values.

use super::base::{eq_batch, recover_batch};
use super::S1Keys;
use crate::channel::Session;
use crate::crypto::{
    add1, add2, add_plain1, layered_exp, neg1, neg2, trivial_enc2, Ciphertext1, Ciphertext2,
    PublicKey,
};
use crate::ehl::ehl_sub;
use crate::error::{Error, Result};
use crate::store::EncItem;
use rand::RngCore;

/// `Etwo(t)` select gadget: outer plaintext becomes `Enc(x)` when t = 1 and
/// the trivial encryption of 0 when t = 0 — valid either way, so recovery
/// never exposes a bare zero.
pub fn select_zero_or(pk: &PublicKey, t2: &Ciphertext2, x: &Ciphertext1) -> Ciphertext2 {
    // t·Enc(x) + (1 − t)·1
    let picked = layered_exp(pk, t2, x);
    add2(pk, &add2(pk, &picked, &trivial_enc2(pk, &num_bigint::BigUint::from(1u32))), &neg2(pk, t2))
}

/// Worst-score protocol for one item against the other same-depth items.
/// Returns `Enc(Σ x_j over equal objects in H)` — the caller adds the item's
/// own score. H is permuted before the equality round.
pub fn sec_worst(
    sess: &mut Session,
    keys: &S1Keys,
    item: &EncItem,
    others: &[EncItem],
    rng: &mut impl RngCore,
) -> Result<Ciphertext1> {
    let pk = &keys.pk;
    if others.iter().any(|o| o.ehl.len() != item.ehl.len()) {
        return Err(Error::Domain("hash list length mismatch".into()));
    }
    let mut order: Vec<usize> = (0..others.len()).collect();
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let mut diffs = Vec::with_capacity(others.len());
    for &j in &order {
        diffs.push(ehl_sub(pk, &item.ehl, &others[j].ehl, rng)?);
    }
    let indicators = eq_batch(sess, pk, &diffs)?;
    let selected: Vec<Ciphertext2> = order
        .iter()
        .zip(&indicators)
        .map(|(&j, (t2, _))| select_zero_or(pk, t2, &others[j].score))
        .collect();
    let scores = recover_batch(sess, keys, &selected, rng)?;
    let mut acc = keys.pool.enc1(&num_bigint::BigUint::from(0u32), rng);
    for s in &scores {
        acc = add1(pk, &acc, s);
    }
    Ok(acc)
}

/// Best-score protocol for one item: for each other list, the seen prefix is
/// scanned with the equality round; the contribution is the matched score if
/// the object appeared there, else the list's bottom. Returns the partial
/// best (the caller adds the item's own score).
pub fn sec_best(
    sess: &mut Session,
    keys: &S1Keys,
    item: &EncItem,
    others: &[(&[EncItem], &Ciphertext1)],
    rng: &mut impl RngCore,
) -> Result<Ciphertext1> {
    let pk = &keys.pk;
    if others.is_empty() {
        return Err(Error::Domain("best score needs the other lists' state".into()));
    }
    // one flat equality batch over every prefix cell
    let mut diffs = Vec::new();
    for (prefix, _) in others {
        for cell in *prefix {
            diffs.push(ehl_sub(pk, &item.ehl, &cell.ehl, rng)?);
        }
    }
    let indicators = eq_batch(sess, pk, &diffs)?;
    let mut at = 0;
    let mut contribs = Vec::with_capacity(others.len());
    for (prefix, bottom) in others {
        // Σ_r t_r·Enc(x_r) + (1 − Σ_r t_r)·Enc(bottom): the object occurs at
        // most once per list, so exactly one term is live.
        let mut seen_sum = trivial_enc2(pk, &num_bigint::BigUint::from(0u32));
        let mut acc: Option<Ciphertext2> = None;
        for cell in *prefix {
            let (t2, _) = &indicators[at];
            at += 1;
            seen_sum = add2(pk, &seen_sum, t2);
            let picked = layered_exp(pk, t2, &cell.score);
            acc = Some(match acc {
                None => picked,
                Some(a) => add2(pk, &a, &picked),
            });
        }
        let unseen = add2(
            pk,
            &trivial_enc2(pk, &num_bigint::BigUint::from(1u32)),
            &neg2(pk, &seen_sum),
        );
        let bottom_part = layered_exp(pk, &unseen, bottom);
        let total = match acc {
            None => bottom_part,
            Some(a) => add2(pk, &a, &bottom_part),
        };
        contribs.push(total);
    }
    let parts = recover_batch(sess, keys, &contribs, rng)?;
    let mut acc = keys.pool.enc1(&num_bigint::BigUint::from(0u32), rng);
    for p in &parts {
        acc = add1(pk, &acc, p);
    }
    Ok(acc)
}

/// Per-depth scores for the engine: one equality round over the C(m,2)
/// unordered pairs of the (already permuted) depth items, then worst, best,
/// and unseen-mask derivation per item, all sharing the same indicator bits.
/// Masks come back in the same permuted-list coordinates as `items`.
pub struct DepthScores {
    pub worst: Vec<Ciphertext1>,
    pub best: Vec<Ciphertext1>,
    pub masks: Vec<Vec<Ciphertext1>>,
}

pub fn depth_worst_best(
    sess: &mut Session,
    keys: &S1Keys,
    items: &[EncItem],
    bottoms: &[Ciphertext1],
    rng: &mut impl RngCore,
) -> Result<DepthScores> {
    let pk = &keys.pk;
    let m = items.len();
    if bottoms.len() != m || m == 0 {
        return Err(Error::Domain("one bottom per depth item".into()));
    }
    // pair (i, j), i < j, row-major — S2 sees this order over the permuted items
    let mut diffs = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            diffs.push(ehl_sub(pk, &items[i].ehl, &items[j].ehl, rng)?);
        }
    }
    let indicators = eq_batch(sess, pk, &diffs)?;
    let pair = |i: usize, j: usize| -> &(Ciphertext2, Ciphertext1) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // index of (a,b) in row-major upper triangle
        let idx = a * m - a * (a + 1) / 2 + (b - a - 1);
        &indicators[idx]
    };

    // worst: Σ over co-occurring others' scores (plus own, added here)
    let mut selects = Vec::with_capacity(m * (m - 1));
    for g in 0..m {
        for j in 0..m {
            if j != g {
                selects.push(select_zero_or(pk, &pair(g, j).0, &items[j].score));
            }
        }
    }
    let recovered = recover_batch(sess, keys, &selects, rng)?;
    let mut worst = Vec::with_capacity(m);
    for g in 0..m {
        let mut acc = keys.pool.rerand1(&items[g].score, rng);
        for r in 0..m - 1 {
            acc = add1(pk, &acc, &recovered[g * (m - 1) + r]);
        }
        worst.push(acc);
    }

    // best: worst + Σ over unseen lists' bottoms
    sess.set_ctx(sess.ctx().query, sess.ctx().depth, crate::wire::Phase::Best);
    let mut selects = Vec::with_capacity(m * (m - 1));
    for g in 0..m {
        for j in 0..m {
            if j != g {
                let u2 = add2(
                    pk,
                    &trivial_enc2(pk, &num_bigint::BigUint::from(1u32)),
                    &neg2(pk, &pair(g, j).0),
                );
                selects.push(select_zero_or(pk, &u2, &bottoms[j]));
            }
        }
    }
    let recovered = recover_batch(sess, keys, &selects, rng)?;
    let mut best = Vec::with_capacity(m);
    for g in 0..m {
        let mut acc = worst[g].clone();
        for r in 0..m - 1 {
            acc = add1(pk, &acc, &recovered[g * (m - 1) + r]);
        }
        best.push(acc);
    }

    // unseen masks u[g][j] = 1 − t(g,j) for j ≠ g, 0 for the own list
    let one = num_bigint::BigUint::from(1u32);
    let mut masks = Vec::with_capacity(m);
    for g in 0..m {
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            if j == g {
                row.push(Ciphertext1(num_bigint::BigUint::from(1u32))); // trivial Enc(0)
            } else {
                row.push(add_plain1(pk, &neg1(pk, &pair(g, j).1), &one));
            }
        }
        masks.push(row);
    }
    Ok(DepthScores { worst, best, masks })
}
