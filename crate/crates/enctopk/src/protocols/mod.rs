//! The two-party sub-protocols. Each function here drives S1's side of one
//! protocol over a [`Session`]; the matching S2 handlers live in
//! [`crate::party`]. S1 never holds the decryption key; S2 never sees an
//! unblinded value, list index, or token.

mod base;
mod dedup;
mod join;
mod sort;
mod update;
mod worstbest;

pub use base::*;
pub use dedup::*;
pub use join::*;
pub use sort::*;
pub use update::*;
pub use worstbest::*;

use crate::bigint::{sample_below, to_fixed_be};
use crate::crypto::{Ciphertext1, PublicKey, Randomizer, SecretKey};
use crate::ehl::Ehl;
use crate::error::{Error, Result};
use crate::wire::{PayloadReader, PayloadWriter};
use num_bigint::BigUint;
use rand::RngCore;

/// An object's running record: hash list, worst (lower) and best (upper)
/// encrypted score bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredItem {
    pub ehl: Ehl,
    pub worst: Ciphertext1,
    pub best: Ciphertext1,
}

/// A scored item plus its per-list unseen indicators (`Enc(1)` where the
/// object has not yet been seen in that list), which keep the best bound
/// current as bottoms drop. Mask order follows the true query-list order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedItem {
    pub item: ScoredItem,
    pub masks: Vec<Ciphertext1>,
}

/// S1's long-lived key material: the shared public key, randomizer pools,
/// and S1's own keypair for blind packs (wide enough that sums of up to
/// three blinds never wrap).
pub struct S1Keys {
    pub pk: PublicKey,
    pub pool: Randomizer,
    pub own_pk: PublicKey,
    pub own_sk: SecretKey,
    pub own_pool: Randomizer,
}

impl S1Keys {
    pub fn new(pk: &PublicKey, rng: &mut impl RngCore) -> Result<Self> {
        let pool = Randomizer::new(pk, rng);
        let (own_pk, own_sk) = crate::crypto::keygen(pk.bits + 64, rng)?;
        let own_pool = Randomizer::new(&own_pk, rng);
        Ok(S1Keys { pk: pk.clone(), pool, own_pk, own_sk, own_pool })
    }
}

/// The additive blinds protecting one item in transit, kept by S1 and also
/// carried alongside the item encrypted under S1's own key so S2 can fold
/// its re-blinds in without learning them.
#[derive(Debug, Clone)]
pub struct Blinds {
    pub alphas: Vec<BigUint>,
    pub beta: BigUint,
    pub gamma: BigUint,
    pub deltas: Vec<BigUint>,
}

impl Blinds {
    pub fn draw(n_mod: &BigUint, slots: usize, masks: usize, rng: &mut impl RngCore) -> Self {
        Blinds {
            alphas: (0..slots).map(|_| sample_below(rng, n_mod)).collect(),
            beta: sample_below(rng, n_mod),
            gamma: sample_below(rng, n_mod),
            deltas: (0..masks).map(|_| sample_below(rng, n_mod)).collect(),
        }
    }

    pub fn values(&self) -> Vec<&BigUint> {
        let mut v: Vec<&BigUint> = self.alphas.iter().collect();
        v.push(&self.beta);
        v.push(&self.gamma);
        v.extend(self.deltas.iter());
        v
    }
}

pub(crate) fn write_ct1(w: &mut PayloadWriter, pk: &PublicKey, c: &Ciphertext1) {
    w.put_bytes(&to_fixed_be(&c.0, pk.ct1_width()));
}

pub(crate) fn read_ct1(r: &mut PayloadReader, pk: &PublicKey) -> Result<Ciphertext1> {
    Ciphertext1::from_bytes(pk, r.bytes(pk.ct1_width())?)
}

/// Item block on the wire: hash-list slots, worst, best, masks.
pub(crate) fn write_item(
    w: &mut PayloadWriter,
    pk: &PublicKey,
    item: &ScoredItem,
    masks: &[Ciphertext1],
) {
    for s in &item.ehl.slots {
        write_ct1(w, pk, s);
    }
    write_ct1(w, pk, &item.worst);
    write_ct1(w, pk, &item.best);
    for m in masks {
        write_ct1(w, pk, m);
    }
}

pub(crate) fn read_item(
    r: &mut PayloadReader,
    pk: &PublicKey,
    slots: usize,
    mask_count: usize,
) -> Result<(ScoredItem, Vec<Ciphertext1>)> {
    let mut slot_cts = Vec::with_capacity(slots);
    for _ in 0..slots {
        slot_cts.push(read_ct1(r, pk)?);
    }
    let worst = read_ct1(r, pk)?;
    let best = read_ct1(r, pk)?;
    let mut masks = Vec::with_capacity(mask_count);
    for _ in 0..mask_count {
        masks.push(read_ct1(r, pk)?);
    }
    Ok((ScoredItem { ehl: Ehl { slots: slot_cts }, worst, best }, masks))
}

/// Blind pack on the wire: one ciphertext under S1's own key per blind
/// component, in item-block order.
pub(crate) fn write_pack(w: &mut PayloadWriter, own_pk: &PublicKey, pack: &[Ciphertext1]) {
    for c in pack {
        w.put_bytes(&to_fixed_be(&c.0, own_pk.ct1_width()));
    }
}

pub(crate) fn read_pack(
    r: &mut PayloadReader,
    own_pk: &PublicKey,
    len: usize,
) -> Result<Vec<Ciphertext1>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(Ciphertext1::from_bytes(own_pk, r.bytes(own_pk.ct1_width())?)?);
    }
    Ok(out)
}

/// Apply additive blinds to an item: ⊙ on the hash list, homomorphic adds
/// on worst/best/masks. Used both to blind (fresh randomness) and, with
/// negated values, to strip blinds declared in a returned pack.
pub fn apply_blinds(
    pk: &PublicKey,
    item: &ScoredItem,
    masks: &[Ciphertext1],
    blinds: &Blinds,
) -> Result<(ScoredItem, Vec<Ciphertext1>)> {
    if blinds.alphas.len() != item.ehl.len() || blinds.deltas.len() != masks.len() {
        return Err(Error::Domain("blind vector length mismatch".into()));
    }
    let ehl = Ehl {
        slots: item
            .ehl
            .slots
            .iter()
            .zip(&blinds.alphas)
            .map(|(s, a)| crate::crypto::add_plain1(pk, s, a))
            .collect(),
    };
    let worst = crate::crypto::add_plain1(pk, &item.worst, &blinds.beta);
    let best = crate::crypto::add_plain1(pk, &item.best, &blinds.gamma);
    let new_masks = masks
        .iter()
        .zip(&blinds.deltas)
        .map(|(m, d)| crate::crypto::add_plain1(pk, m, d))
        .collect();
    Ok((ScoredItem { ehl, worst, best }, new_masks))
}

pub fn negate_blinds(n_mod: &BigUint, b: &Blinds) -> Blinds {
    let neg = |v: &BigUint| (n_mod - (v % n_mod)) % n_mod;
    Blinds {
        alphas: b.alphas.iter().map(neg).collect(),
        beta: neg(&b.beta),
        gamma: neg(&b.gamma),
        deltas: b.deltas.iter().map(neg).collect(),
    }
}

/// Decrypt a returned blind pack (under S1's own key) into blind values
/// reduced mod N, ready for negation and stripping.
pub fn decode_pack(
    keys: &S1Keys,
    pack: &[Ciphertext1],
    slots: usize,
    mask_count: usize,
) -> Result<Blinds> {
    if pack.len() != slots + 2 + mask_count {
        return Err(Error::Protocol("blind pack length mismatch".into()));
    }
    let n = &keys.pk.n;
    let dec: Result<Vec<BigUint>> = pack
        .iter()
        .map(|c| Ok(crate::crypto::dec1(&keys.own_sk, c)? % n))
        .collect();
    let mut dec = dec?;
    let deltas = dec.split_off(slots + 2);
    let gamma = dec.pop().unwrap();
    let beta = dec.pop().unwrap();
    Ok(Blinds { alphas: dec, beta, gamma, deltas })
}
