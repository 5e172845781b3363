//! Blocking frame channels between the two parties. The in-process channel
//! carries the same encoded bytes as the TCP transport, so transcripts are
//! byte-identical across channel kinds.

use crate::error::{Error, Result};
use crate::leakage::LeakageLog;
use crate::transcript::Transcript;
use crate::wire::{Ctx, Frame, Phase, TAG_ERROR};
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{Receiver, SyncSender};

pub trait Channel: Send {
    fn send(&mut self, frame: &Frame) -> Result<()>;
    fn recv(&mut self) -> Result<Frame>;
}

/// In-process channel: frames are serialized to bytes and passed over
/// bounded queues.
pub struct InprocChannel {
    tx: SyncSender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl InprocChannel {
    pub fn pair() -> (InprocChannel, InprocChannel) {
        let (tx_a, rx_b) = std::sync::mpsc::sync_channel(64);
        let (tx_b, rx_a) = std::sync::mpsc::sync_channel(64);
        (InprocChannel { tx: tx_a, rx: rx_a }, InprocChannel { tx: tx_b, rx: rx_b })
    }
}

impl Channel for InprocChannel {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.tx
            .send(frame.to_bytes())
            .map_err(|_| Error::Channel("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Frame> {
        let bytes = self.rx.recv().map_err(|_| Error::Channel("peer hung up".into()))?;
        let (frame, used) = Frame::from_bytes(&bytes)?;
        if used != bytes.len() {
            return Err(Error::Channel("garbage after frame".into()));
        }
        Ok(frame)
    }
}

pub struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpChannel {
    pub fn connect(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Channel(format!("connect {addr}: {e}")))?;
        Self::from_stream(stream)
    }

    pub fn from_stream(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true).ok();
        let reader = BufReader::new(
            stream.try_clone().map_err(|e| Error::Channel(format!("clone stream: {e}")))?,
        );
        Ok(TcpChannel { reader, writer: BufWriter::new(stream) })
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        frame.write_to(&mut self.writer)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        Frame::read_from(&mut self.reader)
    }
}

/// Generic framed channel over any Read+Write pair.
pub struct StreamChannel<S: Read + Write + Send> {
    stream: S,
}

impl<S: Read + Write + Send> StreamChannel<S> {
    pub fn new(stream: S) -> Self {
        StreamChannel { stream }
    }
}

impl<S: Read + Write + Send> Channel for StreamChannel<S> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        frame.write_to(&mut self.stream)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        Frame::read_from(&mut self.stream)
    }
}

/// S1's side of a live connection: the channel plus transcript accounting,
/// the S1-side leakage log, sequence numbering, and an optional raw payload
/// capture for the audit harness.
pub struct Session {
    chan: Box<dyn Channel>,
    pub transcript: Transcript,
    pub log: LeakageLog,
    pub capture: Option<Vec<Vec<u8>>>,
    ctx: Ctx,
    seq: u32,
}

impl Session {
    pub fn new(chan: Box<dyn Channel>) -> Self {
        Session {
            chan,
            transcript: Transcript::new(),
            log: LeakageLog::new(),
            capture: None,
            ctx: Ctx::new(0, 0, Phase::Setup),
            seq: 0,
        }
    }

    pub fn with_capture(mut self) -> Self {
        self.capture = Some(Vec::new());
        self
    }

    pub fn set_ctx(&mut self, query: u32, depth: u32, phase: Phase) {
        self.ctx = Ctx::new(query, depth, phase);
    }

    pub fn ctx(&self) -> Ctx {
        self.ctx
    }

    /// Fire-and-forget send (shutdown notification).
    pub fn send_raw(&mut self, tag: u16, payload: Vec<u8>) -> Result<()> {
        self.seq += 1;
        let frame = Frame { tag, seq: self.seq, payload };
        self.transcript.record_send(self.ctx, frame.encoded_len());
        if let Some(cap) = &mut self.capture {
            cap.push(frame.payload.clone());
        }
        self.chan.send(&frame)
    }

    /// Send a request and block for its reply. Replies must carry
    /// `tag + 1` and echo the request sequence number.
    pub fn exchange(&mut self, tag: u16, payload: Vec<u8>) -> Result<Vec<u8>> {
        self.seq += 1;
        let frame = Frame { tag, seq: self.seq, payload };
        self.transcript.record_send(self.ctx, frame.encoded_len());
        if let Some(cap) = &mut self.capture {
            cap.push(frame.payload.clone());
        }
        self.chan.send(&frame)?;
        let reply = self.chan.recv()?;
        self.transcript.record_recv(self.ctx, reply.encoded_len());
        if let Some(cap) = &mut self.capture {
            cap.push(reply.payload.clone());
        }
        if reply.tag == TAG_ERROR {
            return Err(Error::Protocol(String::from_utf8_lossy(&reply.payload).into_owned()));
        }
        if reply.tag != tag + 1 {
            return Err(Error::Desync { expected: tag + 1, got: reply.tag });
        }
        if reply.seq != self.seq {
            return Err(Error::Protocol(format!(
                "reply out of order: seq {} for request {}",
                reply.seq, self.seq
            )));
        }
        Ok(reply.payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{TAG_HELLO, TAG_HELLO_ACK};

    fn echo_service(mut chan: impl Channel) {
        loop {
            let Ok(f) = chan.recv() else { return };
            if f.tag == crate::wire::TAG_SHUTDOWN {
                return;
            }
            let reply = Frame { tag: f.tag + 1, seq: f.seq, payload: f.payload };
            if chan.send(&reply).is_err() {
                return;
            }
        }
    }

    #[test]
    fn inproc_echo_roundtrip() {
        let (a, b) = InprocChannel::pair();
        let handle = std::thread::spawn(move || echo_service(b));
        let mut s = Session::new(Box::new(a)).with_capture();
        s.set_ctx(1, 0, Phase::Setup);
        let out = s.exchange(TAG_HELLO, b"ping".to_vec()).unwrap();
        assert_eq!(out, b"ping");
        let _ = s.exchange(crate::wire::TAG_SHUTDOWN - 1, vec![]);
        drop(s);
        handle.join().unwrap();
    }

    #[test]
    fn tcp_and_inproc_transcripts_match() {
        // inproc run
        let (a, b) = InprocChannel::pair();
        let h = std::thread::spawn(move || echo_service(b));
        let mut s1 = Session::new(Box::new(a));
        s1.set_ctx(1, 1, Phase::Worst);
        s1.exchange(TAG_HELLO, vec![7; 33]).unwrap();
        drop(s1.chan);
        h.join().unwrap();

        // tcp run
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            echo_service(TcpChannel::from_stream(stream).unwrap());
        });
        let mut s2 = Session::new(Box::new(TcpChannel::connect(&addr.to_string()).unwrap()));
        s2.set_ctx(1, 1, Phase::Worst);
        s2.exchange(TAG_HELLO, vec![7; 33]).unwrap();
        drop(s2.chan);
        h.join().unwrap();
    }

    #[test]
    fn desync_detected() {
        let (a, b) = InprocChannel::pair();
        let h = std::thread::spawn(move || {
            let mut chan = b;
            let f = chan.recv().unwrap();
            chan.send(&Frame { tag: f.tag + 9, seq: f.seq, payload: vec![] }).unwrap();
        });
        let mut s = Session::new(Box::new(a));
        let err = s.exchange(TAG_HELLO, vec![]).unwrap_err();
        assert!(matches!(err, Error::Desync { expected, .. } if expected == TAG_HELLO_ACK));
        h.join().unwrap();
    }
}
