//! Wire protocol: length-delimited frames with a tag and sequence number,
//! and byte-level payload encoding helpers. One logical protocol message is
//! one frame; payloads are count-prefixed fixed-width ciphertext arrays.
//!
//! Frame layout (big-endian): `len u32 | tag u16 | seq u32 | payload`,
//! where `len` covers tag + seq + payload.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub const TAG_HELLO: u16 = 1;
pub const TAG_HELLO_ACK: u16 = 2;
pub const TAG_QUERY_START: u16 = 3;
pub const TAG_QUERY_START_ACK: u16 = 4;
pub const TAG_EQ_BATCH: u16 = 5;
pub const TAG_EQ_REPLY: u16 = 6;
pub const TAG_RECOVER_BATCH: u16 = 7;
pub const TAG_RECOVER_REPLY: u16 = 8;
pub const TAG_CMP_BATCH: u16 = 9;
pub const TAG_CMP_REPLY: u16 = 10;
pub const TAG_DEDUP_REQ: u16 = 11;
pub const TAG_DEDUP_REPLY: u16 = 12;
pub const TAG_UPDATE_REQ: u16 = 13;
pub const TAG_UPDATE_REPLY: u16 = 14;
pub const TAG_BLINDPROD_REQ: u16 = 15;
pub const TAG_BLINDPROD_REPLY: u16 = 16;
pub const TAG_FILTER_REQ: u16 = 17;
pub const TAG_FILTER_REPLY: u16 = 18;
pub const TAG_QUERY_END: u16 = 19;
pub const TAG_QUERY_END_ACK: u16 = 20;
pub const TAG_SHUTDOWN: u16 = 21;
pub const TAG_ERROR: u16 = 22;

/// Protocol phases, carried in every payload context header for transcript
/// accounting and the leakage log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Phase {
    Setup = 0,
    Worst = 1,
    Best = 2,
    Dedup = 3,
    Update = 4,
    Refresh = 5,
    Sort = 6,
    Halt = 7,
    Join = 8,
    Filter = 9,
    Result = 10,
}

impl Phase {
    pub fn from_u8(v: u8) -> Result<Phase> {
        Ok(match v {
            0 => Phase::Setup,
            1 => Phase::Worst,
            2 => Phase::Best,
            3 => Phase::Dedup,
            4 => Phase::Update,
            5 => Phase::Refresh,
            6 => Phase::Sort,
            7 => Phase::Halt,
            8 => Phase::Join,
            9 => Phase::Filter,
            10 => Phase::Result,
            other => return Err(Error::Format(format!("unknown phase {other}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Worst => "worst",
            Phase::Best => "best",
            Phase::Dedup => "dedup",
            Phase::Update => "update",
            Phase::Refresh => "refresh",
            Phase::Sort => "sort",
            Phase::Halt => "halt",
            Phase::Join => "join",
            Phase::Filter => "filter",
            Phase::Result => "result",
        }
    }
}

/// Per-message context: which query, depth, and phase a frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ctx {
    pub query: u32,
    pub depth: u32,
    pub phase: Phase,
}

impl Ctx {
    pub fn new(query: u32, depth: u32, phase: Phase) -> Self {
        Ctx { query, depth, phase }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: u16,
    pub seq: u32,
    pub payload: Vec<u8>,
}

/// Upper bound on a frame body; anything larger is treated as corruption.
pub const MAX_FRAME_LEN: u32 = 1 << 28;

impl Frame {
    pub fn encoded_len(&self) -> usize {
        4 + 2 + 4 + self.payload.len()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let len = (2 + 4 + self.payload.len()) as u32;
        if len > MAX_FRAME_LEN {
            return Err(Error::Channel("frame too large".into()));
        }
        w.write_all(&len.to_be_bytes())?;
        w.write_all(&self.tag.to_be_bytes())?;
        w.write_all(&self.seq.to_be_bytes())?;
        w.write_all(&self.payload)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("in-memory write");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Frame> {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)?;
        let len = u32::from_be_bytes(len_buf);
        if len < 6 || len > MAX_FRAME_LEN {
            return Err(Error::Format(format!("implausible frame length {len}")));
        }
        let mut tag_buf = [0u8; 2];
        r.read_exact(&mut tag_buf)?;
        let mut seq_buf = [0u8; 4];
        r.read_exact(&mut seq_buf)?;
        let mut payload = vec![0u8; len as usize - 6];
        r.read_exact(&mut payload)?;
        Ok(Frame { tag: u16::from_be_bytes(tag_buf), seq: u32::from_be_bytes(seq_buf), payload })
    }

    /// Parse one frame from a byte slice, returning the bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Frame, usize)> {
        let mut cur = bytes;
        let f = Frame::read_from(&mut cur)?;
        Ok((f, bytes.len() - cur.len()))
    }
}

/// Payload writer with the conventions of this protocol (big-endian
/// integers, count-prefixed arrays, fixed-width ciphertext blocks).
#[derive(Default)]
pub struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ctx(mut self, ctx: Ctx) -> Self {
        self.put_u32(ctx.query);
        self.put_u32(ctx.depth);
        self.put_u8(ctx.phase as u8);
        self
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn put_var_bytes(&mut self, b: &[u8]) {
        self.put_u32(b.len() as u32);
        self.put_bytes(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor-style payload reader; every accessor fails loudly on truncation.
pub struct PayloadReader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        PayloadReader { buf, at: 0 }
    }

    pub fn ctx(&mut self) -> Result<Ctx> {
        let query = self.u32()?;
        let depth = self.u32()?;
        let phase = Phase::from_u8(self.u8()?)?;
        Ok(Ctx { query, depth, phase })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated payload".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn var_bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        if n > MAX_FRAME_LEN as usize {
            return Err(Error::Format("implausible field length".into()));
        }
        self.take(n)
    }

    /// Array count with a sanity ceiling derived from the remaining bytes.
    pub fn count(&mut self, elem_width: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if elem_width > 0 && n > (self.buf.len() - self.at) / elem_width {
            return Err(Error::Format("count exceeds payload".into()));
        }
        Ok(n)
    }

    pub fn finish(&self) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing payload bytes",
                self.buf.len() - self.at
            )));
        }
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let f = Frame { tag: TAG_EQ_BATCH, seq: 7, payload: vec![1, 2, 3, 4, 5] };
        let bytes = f.to_bytes();
        let (back, used) = Frame::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn truncated_frames_rejected() {
        let f = Frame { tag: 1, seq: 0, payload: vec![9; 32] };
        let bytes = f.to_bytes();
        for cut in [0, 3, 5, 9, bytes.len() - 1] {
            assert!(Frame::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn implausible_length_rejected() {
        let mut bytes = vec![0xff, 0xff, 0xff, 0xff];
        bytes.extend_from_slice(&[0; 16]);
        assert!(Frame::from_bytes(&bytes).is_err());
    }

    #[test]
    fn payload_readers_guard_truncation() {
        let mut w = PayloadWriter::new().ctx(Ctx::new(1, 2, Phase::Worst));
        w.put_u32(0xdead_beef);
        w.put_var_bytes(b"xyz");
        let buf = w.finish();
        let mut r = PayloadReader::new(&buf);
        let ctx = r.ctx().unwrap();
        assert_eq!(ctx.query, 1);
        assert_eq!(ctx.depth, 2);
        assert_eq!(ctx.phase, Phase::Worst);
        assert_eq!(r.u32().unwrap(), 0xdead_beef);
        assert_eq!(r.var_bytes().unwrap(), b"xyz");
        r.finish().unwrap();

        let mut r2 = PayloadReader::new(&buf[..6]);
        assert!(r2.ctx().is_err());
    }

    #[test]
    fn phase_names_roundtrip() {
        for v in 0..=10u8 {
            let p = Phase::from_u8(v).unwrap();
            assert_eq!(p as u8, v);
            assert!(!p.name().is_empty());
        }
        assert!(Phase::from_u8(42).is_err());
    }
}
