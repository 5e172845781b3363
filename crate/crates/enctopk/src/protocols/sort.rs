//! Oblivious ordering built from the blinded comparator: a Batcher
//! odd-even merge sorting network (EncSort) and tournament top-k selection.
//! S1 executes the comparator-driven swaps itself, so what it learns is the
//! order of a randomly permuted list — the output order and nothing else.

use super::base::compare_batch;
use crate::channel::Session;
use crate::crypto::{Ciphertext1, PublicKey, Randomizer};
use crate::error::Result;
use num_traits::Zero;
use rand::RngCore;

/// Comparator layers of the odd-even merge sorting network for `n` inputs
/// (network built for the next power of two, comparators over padded
/// positions dropped). Comparators within one layer touch disjoint lines.
pub fn batcher_layers(n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut layers = Vec::new();
    if n < 2 {
        return layers;
    }
    let n2 = n.next_power_of_two();
    let mut p = 1;
    while p < n2 {
        let mut k = p;
        while k >= 1 {
            let mut layer = Vec::new();
            let mut j = k % p;
            while j + k < n2 {
                if (j / (2 * p)) == ((j + k) / (2 * p)) && j + k < n {
                    layer.push((j, j + k));
                }
                j += 2 * k;
            }
            if !layer.is_empty() {
                layers.push(layer);
            }
            k /= 2;
        }
        p *= 2;
    }
    layers
}

/// Comparator count of the unpruned power-of-two network — the bound
/// acceptance checks measured counts against.
pub fn batcher_bound(n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    let n2 = n.next_power_of_two();
    let mut count = 0;
    let mut p = 1;
    while p < n2 {
        let mut k = p;
        while k >= 1 {
            let mut j = k % p;
            while j + k < n2 {
                if (j / (2 * p)) == ((j + k) / (2 * p)) {
                    count += 1;
                }
                j += 2 * k;
            }
            k /= 2;
        }
        p *= 2;
    }
    count
}

/// Sort key/payload pairs ascending by encrypted key. Returns fresh
/// re-randomized ciphertexts and the comparator count used. The payload
/// re-randomizer runs once per element on the way out.
pub fn enc_sort<T, F>(
    sess: &mut Session,
    pk: &PublicKey,
    pool: &Randomizer,
    items: Vec<(Ciphertext1, T)>,
    mut rerand_payload: F,
    rng: &mut impl RngCore,
) -> Result<(Vec<(Ciphertext1, T)>, usize)>
where
    F: FnMut(T, &mut dyn RngCore) -> T,
{
    let mut items = items;
    // random pre-permutation: the comparison outcomes S1 observes are then
    // equivalent to knowing only the output order
    shuffle(&mut items, rng);
    let mut comparators = 0;
    for layer in batcher_layers(items.len()) {
        let pairs: Vec<(&Ciphertext1, &Ciphertext1)> =
            layer.iter().map(|&(i, j)| (&items[i].0, &items[j].0)).collect();
        let outcomes = compare_batch(sess, pk, &pairs, rng)?;
        comparators += layer.len();
        for (&(i, j), le) in layer.iter().zip(outcomes) {
            if !le {
                items.swap(i, j);
            }
        }
    }
    let out = items
        .into_iter()
        .map(|(key, payload)| (pool.rerand1(&key, rng), rerand_payload(payload, rng)))
        .collect();
    Ok((out, comparators))
}

fn shuffle<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Tournament selection: indices of the `k_sel` largest keys, descending.
/// Builds a max-tournament (batched rounds), then repeatedly removes the
/// winner and refights its path. Comparator count is a function of
/// (len, k_sel) only.
pub fn top_k_desc(
    sess: &mut Session,
    pk: &PublicKey,
    keys: &[&Ciphertext1],
    k_sel: usize,
    rng: &mut impl RngCore,
) -> Result<Vec<usize>> {
    let n = keys.len();
    let k_sel = k_sel.min(n);
    if n == 0 || k_sel == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    // levels[0] = leaves; each node holds Some(index of winning leaf)
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, rng);
    let mut levels: Vec<Vec<Option<usize>>> = vec![order.into_iter().map(Some).collect()];
    while levels.last().unwrap().len() > 1 {
        let below = levels.last().unwrap().clone();
        let pairs: Vec<(usize, usize)> = (0..below.len() / 2).map(|i| (2 * i, 2 * i + 1)).collect();
        let cmp_pairs: Vec<(&Ciphertext1, &Ciphertext1)> = pairs
            .iter()
            .filter_map(|&(a, b)| match (below[a], below[b]) {
                (Some(x), Some(y)) => Some((keys[x], keys[y])),
                _ => None,
            })
            .collect();
        let outcomes = if cmp_pairs.is_empty() {
            Vec::new()
        } else {
            compare_batch(sess, pk, &cmp_pairs, rng)?
        };
        let mut oi = 0;
        let mut above = Vec::with_capacity((below.len() + 1) / 2);
        for &(a, b) in &pairs {
            let win = match (below[a], below[b]) {
                (Some(x), Some(y)) => {
                    let le = outcomes[oi];
                    oi += 1;
                    Some(if le { y } else { x })
                }
                (Some(x), None) => Some(x),
                (None, Some(y)) => Some(y),
                (None, None) => None,
            };
            above.push(win);
        }
        if below.len() % 2 == 1 {
            above.push(below[below.len() - 1]);
        }
        levels.push(above);
    }

    let mut out = Vec::with_capacity(k_sel);
    for _ in 0..k_sel {
        let winner = levels.last().unwrap()[0].expect("non-empty tournament");
        out.push(winner);
        if out.len() == k_sel {
            break;
        }
        // retire the winner and refight its path upward
        let leaf_pos = levels[0].iter().position(|v| *v == Some(winner)).unwrap();
        levels[0][leaf_pos] = None;
        let mut pos = leaf_pos;
        for lvl in 1..levels.len() {
            let lower_len = levels[lvl - 1].len();
            pos /= 2;
            let a = 2 * pos;
            let b = 2 * pos + 1;
            let win = if b >= lower_len {
                levels[lvl - 1][a]
            } else {
                match (levels[lvl - 1][a], levels[lvl - 1][b]) {
                    (Some(x), Some(y)) => {
                        let le = compare_batch(sess, pk, &[(keys[x], keys[y])], rng)?[0];
                        Some(if le { y } else { x })
                    }
                    (Some(x), None) => Some(x),
                    (None, Some(y)) => Some(y),
                    (None, None) => None,
                }
            };
            levels[lvl][pos] = win;
        }
    }
    Ok(out)
}

/// Encrypted maximum over `keys`, padded with `dummy_compares` no-op
/// comparisons so the message count stays independent of the caller's k.
pub fn max_with_padding(
    sess: &mut Session,
    pk: &PublicKey,
    keys: &[&Ciphertext1],
    dummy_compares: usize,
    rng: &mut impl RngCore,
) -> Result<Option<usize>> {
    if keys.is_empty() {
        pad_compares(sess, pk, dummy_compares, rng)?;
        return Ok(None);
    }
    let mut alive: Vec<usize> = (0..keys.len()).collect();
    shuffle(&mut alive, rng);
    while alive.len() > 1 {
        let mut pairs = Vec::new();
        for c in alive.chunks(2) {
            if c.len() == 2 {
                pairs.push((keys[c[0]], keys[c[1]]));
            }
        }
        let outcomes = compare_batch(sess, pk, &pairs, rng)?;
        let mut next = Vec::with_capacity((alive.len() + 1) / 2);
        let mut oi = 0;
        for c in alive.chunks(2) {
            if c.len() == 2 {
                next.push(if outcomes[oi] { c[1] } else { c[0] });
                oi += 1;
            } else {
                next.push(c[0]);
            }
        }
        alive = next;
    }
    pad_compares(sess, pk, dummy_compares, rng)?;
    Ok(Some(alive[0]))
}

fn pad_compares(
    sess: &mut Session,
    pk: &PublicKey,
    n: usize,
    rng: &mut impl RngCore,
) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let zero = Ciphertext1(num_bigint::BigUint::from(1u32)); // trivial Enc(0)
    let pairs: Vec<(&Ciphertext1, &Ciphertext1)> = (0..n).map(|_| (&zero, &zero)).collect();
    let _ = compare_batch(sess, pk, &pairs, rng)?;
    Ok(())
}
