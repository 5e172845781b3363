//! Encrypted top-k query processing between two non-colluding clouds.
//!
//! A data owner encrypts a relation column-by-column into sorted lists of
//! `⟨EHL(object), Enc(score)⟩` cells and ships them to a data cloud (S1).
//! A second, independent crypto cloud (S2) holds the Paillier secret key.
//! Authorized clients mint permuted-index tokens; S1 and S2 then run a
//! sequence of two-party sub-protocols that execute the NRA top-k algorithm
//! over the ciphertexts without either side learning object ids or scores.
//! Equi-join top-k over two encrypted relations works the same way with
//! value-level hash lists.
//!
//! Module map:
//! - [`crypto`]: Paillier and layered Damgård-Jurik (s = 2) cryptosystems.
//! - [`ehl`]: encrypted hash lists with the randomized equality operator.
//! - [`oracle`]: plaintext NRA / join reference used as ground truth in tests.
//! - [`store`]: relation encryption, tokens, and the on-disk formats.
//! - [`wire`], [`channel`], [`transcript`], [`leakage`], [`party`]: the
//!   two-party execution fabric.
//! - [`protocols`]: RecoverEnc, EncCompare, EncSort, SecWorst, SecBest,
//!   SecDedup, SecUpdate, SecJoin, SecFilter.
//! - [`engine`]: depth-by-depth SecQuery orchestration and the join pipeline.

pub mod bigint;
pub mod channel;
pub mod crypto;
pub mod ehl;
pub mod engine;
pub mod error;
pub mod leakage;
pub mod oracle;
pub mod party;
pub mod protocols;
pub mod store;
pub mod transcript;
pub mod wire;

pub use error::{Error, Result};
