//! Relation encryption and the on-disk artifacts: ETK1 encrypted-relation
//! files, key bundles, and query/join tokens.
//!
//! A ranked relation becomes M sorted lists of `⟨EHL(o), Enc(x)⟩` cells with
//! list positions permuted by a keyed pseudorandom permutation; a join
//! relation keeps row order but permutes attribute positions and hashes the
//! attribute *values* so equality is testable across relations.

use crate::crypto::{ct1_width, int_bundle, parse_int_bundle, Ciphertext1, PublicKey, Randomizer, SecretKey};
use crate::ehl::{ehl_encode_fast, int_id, Ehl, EhlKeySet, EhlVariant, MAC_KEY_LEN};
use crate::error::{Error, Result};
use crate::oracle::{sorted_lists, Relation};
use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};

/// One encrypted cell: the object's hash list and its encrypted local score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncItem {
    pub ehl: Ehl,
    pub score: Ciphertext1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErKind {
    Ranked,
    Join,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErMeta {
    pub kind: ErKind,
    pub n: u32,
    pub m: u32,
    pub score_width: u16,
    pub variant: EhlVariant,
    pub modulus_bits: u64,
    pub fingerprint: [u8; 8],
}

/// A position-permuted encrypted relation: M lists of n cells (ranked) or
/// n tuples of M cells (join).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedRelation {
    pub meta: ErMeta,
    /// Ranked: `lists[stored_position][depth-1]`.
    /// Join: `lists[row][stored_attribute]`.
    pub lists: Vec<Vec<EncItem>>,
}

/// Secret key of the pseudorandom permutation over list positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrpKey(pub [u8; 32]);

impl PrpKey {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        PrpKey(k)
    }

    /// The full permutation over `[0, m)` (key-seeded Fisher-Yates).
    pub fn permutation(&self, m: usize) -> Vec<usize> {
        let mut h = Sha256::new();
        h.update(b"enctopk.prp");
        h.update(self.0);
        h.update((m as u64).to_be_bytes());
        let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            perm.swap(i, j);
        }
        perm
    }

    /// Image of one index under the permutation.
    pub fn apply(&self, i: usize, m: usize) -> Result<usize> {
        if i >= m {
            return Err(Error::Domain(format!("index {i} out of range for {m} attributes")));
        }
        Ok(self.permutation(m)[i])
    }
}

/// Client query trapdoor: permuted attribute indices, weights, and k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub k: u32,
    /// Stored-list indices (images under the permutation).
    pub attrs: Vec<u16>,
    pub weights: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinToken {
    pub k: u32,
    /// Permuted positions of (join attr in R1, join attr in R2,
    /// score attr in R1, score attr in R2).
    pub t1: u16,
    pub t2: u16,
    pub t3: u16,
    pub t4: u16,
}

impl Token {
    pub fn fingerprint(&self) -> [u8; 16] {
        let mut h = Sha256::new();
        h.update(self.to_bytes());
        let d = h.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&d[..16]);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"ETKT");
        out.extend_from_slice(&1u16.to_be_bytes());
        out.push(0);
        out.extend_from_slice(&self.k.to_be_bytes());
        out.extend_from_slice(&(self.attrs.len() as u16).to_be_bytes());
        for (a, w) in self.attrs.iter().zip(&self.weights) {
            out.extend_from_slice(&a.to_be_bytes());
            out.extend_from_slice(&w.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Token> {
        let (kind, body) = token_header(bytes)?;
        if kind != 0 {
            return Err(Error::Format("not a ranking token".into()));
        }
        if body.len() < 6 {
            return Err(Error::Format("truncated token".into()));
        }
        let k = u32::from_be_bytes(body[0..4].try_into().unwrap());
        let count = u16::from_be_bytes(body[4..6].try_into().unwrap()) as usize;
        if body.len() != 6 + count * 10 {
            return Err(Error::Format("token length mismatch".into()));
        }
        if k == 0 || count == 0 {
            return Err(Error::Format("token requires k ≥ 1 and attributes".into()));
        }
        let mut attrs = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for i in 0..count {
            let at = 6 + i * 10;
            attrs.push(u16::from_be_bytes(body[at..at + 2].try_into().unwrap()));
            weights.push(u64::from_be_bytes(body[at + 2..at + 10].try_into().unwrap()));
        }
        let mut seen = std::collections::HashSet::new();
        if !attrs.iter().all(|a| seen.insert(*a)) {
            return Err(Error::Format("token indices must be distinct".into()));
        }
        Ok(Token { k, attrs, weights })
    }
}

impl JoinToken {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"ETKT");
        out.extend_from_slice(&1u16.to_be_bytes());
        out.push(1);
        out.extend_from_slice(&self.k.to_be_bytes());
        for t in [self.t1, self.t2, self.t3, self.t4] {
            out.extend_from_slice(&t.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<JoinToken> {
        let (kind, body) = token_header(bytes)?;
        if kind != 1 {
            return Err(Error::Format("not a join token".into()));
        }
        if body.len() != 12 {
            return Err(Error::Format("join token length mismatch".into()));
        }
        let k = u32::from_be_bytes(body[0..4].try_into().unwrap());
        if k == 0 {
            return Err(Error::Format("token requires k ≥ 1".into()));
        }
        let t = |i: usize| u16::from_be_bytes(body[4 + 2 * i..6 + 2 * i].try_into().unwrap());
        Ok(JoinToken { k, t1: t(0), t2: t(1), t3: t(2), t4: t(3) })
    }
}

fn token_header(bytes: &[u8]) -> Result<(u8, &[u8])> {
    if bytes.len() < 7 {
        return Err(Error::Format("truncated token".into()));
    }
    if &bytes[0..4] != b"ETKT" {
        return Err(Error::Format("bad token magic".into()));
    }
    if u16::from_be_bytes(bytes[4..6].try_into().unwrap()) != 1 {
        return Err(Error::Format("unsupported token version".into()));
    }
    Ok((bytes[6], &bytes[7..]))
}

/// Mint a ranking token: resolves attribute names against the plaintext
/// schema and maps them through the permutation.
pub fn make_token(
    prp: &PrpKey,
    schema: &[String],
    attr_names: &[&str],
    weights: &[u64],
    k: u32,
) -> Result<Token> {
    if attr_names.is_empty() || k == 0 {
        return Err(Error::Usage("need at least one attribute and k ≥ 1".into()));
    }
    if weights.len() != attr_names.len() {
        return Err(Error::Usage("one weight per attribute".into()));
    }
    let m = schema.len();
    let mut attrs = Vec::with_capacity(attr_names.len());
    for name in attr_names {
        let idx = schema
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Usage(format!("unknown attribute `{name}`")))?;
        attrs.push(prp.apply(idx, m)? as u16);
    }
    let mut seen = std::collections::HashSet::new();
    if !attrs.iter().all(|a| seen.insert(*a)) {
        return Err(Error::Usage("attributes must be distinct".into()));
    }
    Ok(Token { k, attrs, weights: weights.to_vec() })
}

pub fn make_join_token(
    prp: &PrpKey,
    schema1: &[String],
    schema2: &[String],
    join_attr1: &str,
    join_attr2: &str,
    score_attr1: &str,
    score_attr2: &str,
    k: u32,
) -> Result<JoinToken> {
    if k == 0 {
        return Err(Error::Usage("k must be ≥ 1".into()));
    }
    let resolve = |schema: &[String], name: &str| -> Result<usize> {
        schema
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Usage(format!("unknown attribute `{name}`")))
    };
    let m1 = schema1.len();
    let m2 = schema2.len();
    Ok(JoinToken {
        k,
        t1: prp.apply(resolve(schema1, join_attr1)?, m1)? as u16,
        t2: prp.apply(resolve(schema2, join_attr2)?, m2)? as u16,
        t3: prp.apply(resolve(schema1, score_attr1)?, m1)? as u16,
        t4: prp.apply(resolve(schema2, score_attr2)?, m2)? as u16,
    })
}

fn cell_rng(master: &[u8; 32], list: usize, depth: usize) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"enctopk.cell");
    h.update(master);
    h.update((list as u64).to_be_bytes());
    h.update((depth as u64).to_be_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Encrypt a relation into its permuted sorted-list form. Cell encryption
/// is parallel with rng streams split deterministically per (list, depth).
pub fn encrypt_relation(
    rel: &Relation,
    pk: &PublicKey,
    ehl_keys: &EhlKeySet,
    prp: &PrpKey,
    rng: &mut impl RngCore,
) -> Result<EncryptedRelation> {
    let m = rel.attr_count();
    let n = rel.n();
    let attrs: Vec<usize> = (0..m).collect();
    let lists = sorted_lists(rel, &attrs);
    let pool = Randomizer::new(pk, rng);
    let mut master = [0u8; 32];
    rng.fill_bytes(&mut master);

    let columns: Result<Vec<Vec<EncItem>>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .into_par_iter()
                .map(|d| {
                    let row = lists[i][d];
                    let mut cr = cell_rng(&master, i, d);
                    let ehl = ehl_encode_fast(ehl_keys, pk, &rel.ids[row], &pool, &mut cr)?;
                    let score = pool.enc1(&BigUint::from(rel.values[row][i]), &mut cr);
                    Ok(EncItem { ehl, score })
                })
                .collect()
        })
        .collect();
    let columns = columns?;

    let perm = prp.permutation(m);
    let mut stored: Vec<Vec<EncItem>> = vec![Vec::new(); m];
    for (i, col) in columns.into_iter().enumerate() {
        stored[perm[i]] = col;
    }
    Ok(EncryptedRelation {
        meta: ErMeta {
            kind: ErKind::Ranked,
            n: n as u32,
            m: m as u32,
            score_width: rel.score_width as u16,
            variant: ehl_keys.variant,
            modulus_bits: pk.bits,
            fingerprint: pk.fingerprint(),
        },
        lists: stored,
    })
}

/// Encrypt two relations for equi-joins: every attribute cell carries a
/// hash list over the *value* plus its encryption, with attribute positions
/// permuted under the shared key.
pub fn encrypt_join_relations(
    r1: &Relation,
    r2: &Relation,
    pk: &PublicKey,
    ehl_keys: &EhlKeySet,
    prp: &PrpKey,
    rng: &mut impl RngCore,
) -> Result<(EncryptedRelation, EncryptedRelation)> {
    let pool = Randomizer::new(pk, rng);
    let mut encrypt_one = |rel: &Relation| -> Result<EncryptedRelation> {
        let m = rel.attr_count();
        let perm = prp.permutation(m);
        let mut master = [0u8; 32];
        rng.fill_bytes(&mut master);
        let tuples: Result<Vec<Vec<EncItem>>> = (0..rel.n())
            .into_par_iter()
            .map(|row| {
                let mut cr = cell_rng(&master, row, 0);
                let mut cells = vec![None; m];
                for a in 0..m {
                    let v = rel.values[row][a];
                    let ehl = ehl_encode_fast(ehl_keys, pk, &int_id(v), &pool, &mut cr)?;
                    let score = pool.enc1(&BigUint::from(v), &mut cr);
                    cells[perm[a]] = Some(EncItem { ehl, score });
                }
                Ok(cells.into_iter().map(Option::unwrap).collect())
            })
            .collect();
        Ok(EncryptedRelation {
            meta: ErMeta {
                kind: ErKind::Join,
                n: rel.n() as u32,
                m: m as u32,
                score_width: rel.score_width as u16,
                variant: ehl_keys.variant,
                modulus_bits: pk.bits,
                fingerprint: pk.fingerprint(),
            },
            lists: tuples?,
        })
    };
    Ok((encrypt_one(r1)?, encrypt_one(r2)?))
}

const ER_MAGIC: &[u8; 4] = b"ETK1";
const ER_VERSION: u16 = 1;

impl EncryptedRelation {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let meta = &self.meta;
        w.write_all(ER_MAGIC)?;
        w.write_all(&ER_VERSION.to_be_bytes())?;
        w.write_all(&[match meta.kind {
            ErKind::Ranked => 0,
            ErKind::Join => 1,
        }])?;
        w.write_all(&(meta.modulus_bits as u16).to_be_bytes())?;
        w.write_all(&meta.n.to_be_bytes())?;
        w.write_all(&meta.m.to_be_bytes())?;
        w.write_all(&meta.score_width.to_be_bytes())?;
        let (variant, s, h) = match meta.variant {
            EhlVariant::Plus { s } => (1u8, s, 0u16),
            EhlVariant::Classic { h, s } => (2u8, s, h),
        };
        w.write_all(&[variant])?;
        w.write_all(&s.to_be_bytes())?;
        w.write_all(&h.to_be_bytes())?;
        w.write_all(&meta.fingerprint)?;
        let ct_w = ct1_width(meta.modulus_bits);
        for list in &self.lists {
            for item in list {
                for slot in &item.ehl.slots {
                    w.write_all(&crate::bigint::to_fixed_be(&slot.0, ct_w))?;
                }
                w.write_all(&crate::bigint::to_fixed_be(&item.score.0, ct_w))?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("in-memory write");
        out
    }

    pub fn read_from(r: &mut impl Read, pk: &PublicKey) -> Result<EncryptedRelation> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header).map_err(|_| Error::Format("truncated header".into()))?;
        if &header[0..4] != ER_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        if u16::from_be_bytes(header[4..6].try_into().unwrap()) != ER_VERSION {
            return Err(Error::Format("unsupported version".into()));
        }
        let kind = match header[6] {
            0 => ErKind::Ranked,
            1 => ErKind::Join,
            k => return Err(Error::Format(format!("unknown relation kind {k}"))),
        };
        let modulus_bits = u16::from_be_bytes(header[7..9].try_into().unwrap()) as u64;
        let n = u32::from_be_bytes(header[9..13].try_into().unwrap());
        let m = u32::from_be_bytes(header[13..17].try_into().unwrap());
        let score_width = u16::from_be_bytes(header[17..19].try_into().unwrap());
        let s = u16::from_be_bytes(header[20..22].try_into().unwrap());
        let h = u16::from_be_bytes(header[22..24].try_into().unwrap());
        let variant = match header[19] {
            1 => EhlVariant::Plus { s },
            2 => EhlVariant::Classic { h, s },
            v => return Err(Error::Format(format!("unknown hash list variant {v}"))),
        };
        if variant.s() == 0 {
            return Err(Error::Format("variant requires s ≥ 1".into()));
        }
        let mut fingerprint = [0u8; 8];
        fingerprint.copy_from_slice(&header[24..32]);
        if modulus_bits != pk.bits {
            return Err(Error::Key(format!(
                "relation encrypted under {modulus_bits}-bit modulus, key has {}",
                pk.bits
            )));
        }
        if fingerprint != pk.fingerprint() {
            return Err(Error::Key("relation was encrypted under a different key".into()));
        }
        if n == 0 || m == 0 || n > 10_000_000 || m > 4096 {
            return Err(Error::Format("implausible dimensions".into()));
        }
        let slots = variant.slots();
        let ct_w = ct1_width(modulus_bits);
        let cell_bytes = (slots + 1) * ct_w;
        let total = (n as usize)
            .checked_mul(m as usize)
            .and_then(|c| c.checked_mul(cell_bytes))
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        let mut body = vec![0u8; total];
        r.read_exact(&mut body).map_err(|_| Error::Format("truncated body".into()))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes".into()));
        }

        let (outer, inner) = match kind {
            ErKind::Ranked => (m as usize, n as usize),
            ErKind::Join => (n as usize, m as usize),
        };
        let mut lists = Vec::with_capacity(outer);
        let mut at = 0;
        for _ in 0..outer {
            let mut list = Vec::with_capacity(inner);
            for _ in 0..inner {
                let mut slot_cts = Vec::with_capacity(slots);
                for _ in 0..slots {
                    slot_cts.push(Ciphertext1::from_bytes(pk, &body[at..at + ct_w])?);
                    at += ct_w;
                }
                let score = Ciphertext1::from_bytes(pk, &body[at..at + ct_w])?;
                at += ct_w;
                list.push(EncItem { ehl: Ehl { slots: slot_cts }, score });
            }
            lists.push(list);
        }
        Ok(EncryptedRelation {
            meta: ErMeta { kind, n, m, score_width, variant, modulus_bits, fingerprint },
            lists,
        })
    }
}

const KEY_MAGIC: &[u8; 4] = b"ETKK";
const KEY_VERSION: u16 = 1;

/// Key material files. Each artifact is its own file so the secret key can
/// be provisioned to the crypto cloud alone.
#[derive(Debug, Clone, PartialEq)]
pub enum KeyFile {
    Public(PublicKey),
    Secret { p: BigUint, q: BigUint, bits: u64 },
    EhlKeys(EhlKeySet),
    Prp(PrpKey),
}

impl KeyFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(KEY_MAGIC);
        out.extend_from_slice(&KEY_VERSION.to_be_bytes());
        match self {
            KeyFile::Public(pk) => {
                out.push(1);
                out.extend_from_slice(&(pk.bits as u16).to_be_bytes());
                out.extend_from_slice(&int_bundle(&[&pk.n]));
            }
            KeyFile::Secret { p, q, bits } => {
                out.push(2);
                out.extend_from_slice(&(*bits as u16).to_be_bytes());
                out.extend_from_slice(&int_bundle(&[p, q]));
            }
            KeyFile::EhlKeys(keys) => {
                out.push(3);
                let (variant, s, h) = match keys.variant {
                    EhlVariant::Plus { s } => (1u8, s, 0),
                    EhlVariant::Classic { h, s } => (2u8, s, h),
                };
                out.push(variant);
                out.extend_from_slice(&s.to_be_bytes());
                out.extend_from_slice(&h.to_be_bytes());
                for k in &keys.keys {
                    out.extend_from_slice(k);
                }
            }
            KeyFile::Prp(prp) => {
                out.push(4);
                out.extend_from_slice(&prp.0);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<KeyFile> {
        if bytes.len() < 7 {
            return Err(Error::Format("truncated key file".into()));
        }
        if &bytes[0..4] != KEY_MAGIC {
            return Err(Error::Format("bad key file magic".into()));
        }
        if u16::from_be_bytes(bytes[4..6].try_into().unwrap()) != KEY_VERSION {
            return Err(Error::Format("unsupported key file version".into()));
        }
        let body = &bytes[7..];
        match bytes[6] {
            1 => {
                if body.len() < 2 {
                    return Err(Error::Format("truncated public key".into()));
                }
                let bits = u16::from_be_bytes(body[0..2].try_into().unwrap()) as u64;
                let ints = parse_int_bundle(&body[2..])?;
                if ints.len() != 1 {
                    return Err(Error::Format("public key bundle must hold N".into()));
                }
                Ok(KeyFile::Public(PublicKey::from_modulus(bits, ints[0].clone())?))
            }
            2 => {
                if body.len() < 2 {
                    return Err(Error::Format("truncated secret key".into()));
                }
                let bits = u16::from_be_bytes(body[0..2].try_into().unwrap()) as u64;
                let ints = parse_int_bundle(&body[2..])?;
                if ints.len() != 2 {
                    return Err(Error::Format("secret key bundle must hold p and q".into()));
                }
                Ok(KeyFile::Secret { p: ints[0].clone(), q: ints[1].clone(), bits })
            }
            3 => {
                if body.len() < 5 {
                    return Err(Error::Format("truncated hash key file".into()));
                }
                let s = u16::from_be_bytes(body[1..3].try_into().unwrap());
                let h = u16::from_be_bytes(body[3..5].try_into().unwrap());
                let variant = match body[0] {
                    1 => EhlVariant::Plus { s },
                    2 => EhlVariant::Classic { h, s },
                    v => return Err(Error::Format(format!("unknown variant {v}"))),
                };
                let key_bytes = &body[5..];
                if s == 0 || key_bytes.len() != s as usize * MAC_KEY_LEN {
                    return Err(Error::Format("hash key material length mismatch".into()));
                }
                let keys = key_bytes
                    .chunks(MAC_KEY_LEN)
                    .map(|c| {
                        let mut k = [0u8; MAC_KEY_LEN];
                        k.copy_from_slice(c);
                        k
                    })
                    .collect();
                Ok(KeyFile::EhlKeys(EhlKeySet { variant, keys }))
            }
            4 => {
                if body.len() != 32 {
                    return Err(Error::Format("prp key must be 32 bytes".into()));
                }
                let mut k = [0u8; 32];
                k.copy_from_slice(body);
                Ok(KeyFile::Prp(PrpKey(k)))
            }
            k => Err(Error::Format(format!("unknown key file kind {k}"))),
        }
    }

    pub fn into_secret_key(self) -> Result<SecretKey> {
        match self {
            KeyFile::Secret { p, q, bits } => {
                let pk = PublicKey::from_modulus(bits, &p * &q)?;
                SecretKey::from_factors(p, q, pk)
            }
            _ => Err(Error::Key("not a secret key file".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{dec1, testkit};
    use crate::ehl::EhlDictionary;
    use crate::oracle::{example_relation, random_relation};

    fn setup() -> (ChaCha20Rng, EhlKeySet, PrpKey) {
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        let keys = EhlKeySet::generate(EhlVariant::Plus { s: 5 }, &mut rng).unwrap();
        let prp = PrpKey::generate(&mut rng);
        (rng, keys, prp)
    }

    #[test]
    fn prp_is_a_bijection_and_stable() {
        let (mut rng, _, _) = setup();
        for _ in 0..20 {
            let key = PrpKey::generate(&mut rng);
            for m in [1usize, 2, 5, 16] {
                let perm = key.permutation(m);
                let mut sorted = perm.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..m).collect::<Vec<_>>());
                assert_eq!(perm, key.permutation(m));
            }
        }
    }

    #[test]
    fn prp_images_roughly_uniform() {
        let (mut rng, _, _) = setup();
        let m = 4;
        let mut counts = vec![vec![0u32; m]; m];
        let trials = 1000;
        for _ in 0..trials {
            let key = PrpKey::generate(&mut rng);
            let perm = key.permutation(m);
            for (i, &img) in perm.iter().enumerate() {
                counts[i][img] += 1;
            }
        }
        // χ² against uniform 250 per bucket, 9 dof per row; 3σ-ish bound
        for row in counts {
            let chi2: f64 = row
                .iter()
                .map(|&c| {
                    let e = trials as f64 / m as f64;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            assert!(chi2 < 30.0, "chi2 {chi2}");
        }
    }

    #[test]
    fn encrypt_reconstructs_sorted_lists() {
        let (pk, sk) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let rel = example_relation();
        let er = encrypt_relation(&rel, pk, &keys, &prp, &mut rng).unwrap();
        assert_eq!(er.lists.len(), 3);
        assert!(er.lists.iter().all(|l| l.len() == 5));

        let dict = EhlDictionary::build(&keys, pk, rel.ids.iter().map(|i| i.as_slice())).unwrap();
        let perm = prp.permutation(3);
        let attrs: Vec<usize> = (0..3).collect();
        let plain_lists = sorted_lists(&rel, &attrs);
        for (attr, stored) in perm.iter().enumerate() {
            for (d, item) in er.lists[*stored].iter().enumerate() {
                let row = plain_lists[attr][d];
                let score = dec1(sk, &item.score).unwrap();
                assert_eq!(score, BigUint::from(rel.values[row][attr]));
                let id = dict.identify(sk, &item.ehl).unwrap().expect("known id");
                assert_eq!(id, rel.ids[row]);
            }
        }
    }

    #[test]
    fn reencryption_differs_but_decrypts_equal() {
        let (pk, sk) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let rel = random_relation(77, 4, 2, 12);
        let a = encrypt_relation(&rel, pk, &keys, &prp, &mut rng).unwrap();
        let b = encrypt_relation(&rel, pk, &keys, &prp, &mut rng).unwrap();
        assert_ne!(a.to_bytes(), b.to_bytes());
        for (la, lb) in a.lists.iter().zip(&b.lists) {
            for (ia, ib) in la.iter().zip(lb) {
                assert_eq!(dec1(sk, &ia.score).unwrap(), dec1(sk, &ib.score).unwrap());
            }
        }
    }

    #[test]
    fn singleton_relation() {
        let (pk, _) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let rel = Relation::new(
            vec![b"only".to_vec()],
            vec!["a".into()],
            vec![vec![42]],
            16,
        )
        .unwrap();
        let er = encrypt_relation(&rel, pk, &keys, &prp, &mut rng).unwrap();
        assert_eq!(er.lists.len(), 1);
        assert_eq!(er.lists[0].len(), 1);
    }

    #[test]
    fn er_bytes_roundtrip_and_corruption() {
        let (pk, _) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let rel = random_relation(5, 3, 2, 10);
        let er = encrypt_relation(&rel, pk, &keys, &prp, &mut rng).unwrap();
        let bytes = er.to_bytes();
        let back = EncryptedRelation::read_from(&mut bytes.as_slice(), pk).unwrap();
        assert_eq!(back, er);

        // magic
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(EncryptedRelation::read_from(&mut bad.as_slice(), pk).is_err());
        // version
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(EncryptedRelation::read_from(&mut bad.as_slice(), pk).is_err());
        // truncation
        assert!(
            EncryptedRelation::read_from(&mut bytes[..bytes.len() - 1].to_vec().as_slice(), pk)
                .is_err()
        );
        // trailing garbage
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(EncryptedRelation::read_from(&mut bad.as_slice(), pk).is_err());
    }

    #[test]
    fn theorem1_shape_proxy() {
        // equal (n, M) relations serialize to identical lengths
        let (pk, _) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let a = random_relation(1, 6, 3, 16);
        let b = random_relation(2, 6, 3, 16);
        let ea = encrypt_relation(&a, pk, &keys, &prp, &mut rng).unwrap();
        let eb = encrypt_relation(&b, pk, &keys, &prp, &mut rng).unwrap();
        assert_eq!(ea.to_bytes().len(), eb.to_bytes().len());
    }

    #[test]
    fn tokens_roundtrip_and_validate() {
        let (_, _, prp) = setup();
        let schema: Vec<String> = vec!["age".into(), "chol".into(), "thalach".into()];
        let tok = make_token(&prp, &schema, &["chol", "thalach"], &[1, 1], 2).unwrap();
        assert_eq!(tok.attrs.len(), 2);
        assert_ne!(tok.attrs[0], tok.attrs[1]);
        let bytes = tok.to_bytes();
        assert_eq!(Token::from_bytes(&bytes).unwrap(), tok);
        assert!(Token::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        // structural privacy: the serialized token holds only indices, weights, k
        assert!(bytes.len() < 40);
        assert!(make_token(&prp, &schema, &["nope"], &[1], 1).is_err());
        assert!(make_token(&prp, &schema, &["chol", "chol"], &[1, 1], 1).is_err());

        let jt = make_join_token(&prp, &schema, &schema, "age", "age", "chol", "thalach", 3).unwrap();
        let jb = jt.to_bytes();
        assert_eq!(JoinToken::from_bytes(&jb).unwrap(), jt);
        assert!(Token::from_bytes(&jb).is_err());
    }

    #[test]
    fn token_differs_across_keys() {
        let (mut rng, _, _) = setup();
        let schema: Vec<String> = (0..8).map(|i| format!("a{i}")).collect();
        let names: Vec<&str> = vec!["a1", "a4", "a6"];
        let mut collisions = 0;
        let base = make_token(&PrpKey::generate(&mut rng), &schema, &names, &[1, 1, 1], 2).unwrap();
        for _ in 0..100 {
            let tok = make_token(&PrpKey::generate(&mut rng), &schema, &names, &[1, 1, 1], 2).unwrap();
            if tok.attrs == base.attrs {
                collisions += 1;
            }
        }
        assert!(collisions < 10);
    }

    #[test]
    fn join_relations_value_equality() {
        let (pk, sk) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let r1 = Relation::new(
            vec![b"l1".to_vec()],
            vec!["j".into(), "s".into()],
            vec![vec![7, 40]],
            16,
        )
        .unwrap();
        let r2 = Relation::new(
            vec![b"r1".to_vec(), b"r2".to_vec()],
            vec!["j".into(), "s".into()],
            vec![vec![7, 50], vec![8, 60]],
            16,
        )
        .unwrap();
        let (e1, e2) = encrypt_join_relations(&r1, &r2, pk, &keys, &prp, &mut rng).unwrap();
        assert_eq!(e1.meta.kind, ErKind::Join);
        let perm = prp.permutation(2);
        let j1 = &e1.lists[0][perm[0]];
        let j2_match = &e2.lists[0][perm[0]];
        let j2_miss = &e2.lists[1][perm[0]];
        let d = crate::ehl::ehl_sub(pk, &j1.ehl, &j2_match.ehl, &mut rng).unwrap();
        assert!(num_traits::Zero::is_zero(&dec1(sk, &d).unwrap()));
        let d = crate::ehl::ehl_sub(pk, &j1.ehl, &j2_miss.ehl, &mut rng).unwrap();
        assert!(!num_traits::Zero::is_zero(&dec1(sk, &d).unwrap()));
        // join ER roundtrip
        let bytes = e2.to_bytes();
        assert_eq!(EncryptedRelation::read_from(&mut bytes.as_slice(), pk).unwrap(), e2);
    }

    #[test]
    fn key_files_roundtrip() {
        let (pk, sk) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let files = [
            KeyFile::Public(pk.clone()),
            KeyFile::Secret { p: sk.p.clone(), q: sk.q.clone(), bits: pk.bits },
            KeyFile::EhlKeys(keys),
            KeyFile::Prp(prp),
        ];
        for f in files {
            let bytes = f.to_bytes();
            assert_eq!(KeyFile::from_bytes(&bytes).unwrap(), f);
            assert!(KeyFile::from_bytes(&bytes[..6]).is_err());
        }
        let _ = rng;
        // loaded secret key round-trips an encryption
        let sk2 = KeyFile::from_bytes(
            &KeyFile::Secret { p: sk.p.clone(), q: sk.q.clone(), bits: pk.bits }.to_bytes(),
        )
        .unwrap()
        .into_secret_key()
        .unwrap();
        let mut r = ChaCha20Rng::seed_from_u64(5);
        let c = crate::crypto::enc1(pk, &BigUint::from(77u32), &mut r).unwrap();
        assert_eq!(dec1(&sk2, &c).unwrap(), BigUint::from(77u32));
    }

    #[test]
    fn wrong_key_rejected_on_load() {
        let (pk, _) = testkit::keys512();
        let (mut rng, keys, prp) = setup();
        let rel = random_relation(6, 3, 2, 10);
        let er = encrypt_relation(&rel, pk, &keys, &prp, &mut rng).unwrap();
        let bytes = er.to_bytes();
        let (other_pk, _) = crate::crypto::keygen(512, &mut rng).unwrap();
        let err = EncryptedRelation::read_from(&mut bytes.as_slice(), &other_pk).unwrap_err();
        assert!(matches!(err, Error::Key(_)));
    }
}
