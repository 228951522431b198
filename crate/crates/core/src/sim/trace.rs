//! Canonical JSONL trace records and their FNV-1a digest.
//!
//! Records are written straight into a byte buffer with a fixed field order,
//! so the same run always produces the same bytes. The digest covers every
//! line including its trailing `\n`; keeping the text is optional.

use alloc::string::String;
use alloc::vec::Vec;

use crate::types::{
    BinValue, EstValue, InstanceTag, Message, Payload, Phase, ProcessId, Round, ValueSet,
};

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over `bytes`, continuing from `state`.
pub fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        state ^= u64::from(*b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// Digest of a sequence of lines, as written to a JSONL file.
pub fn digest_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> u64 {
    let mut h = FNV_OFFSET;
    for line in lines {
        h = fnv1a(h, line.as_bytes());
        h = fnv1a(h, b"\n");
    }
    h
}

/// Minimal JSON byte writer; only what trace records need.
#[derive(Default)]
pub struct JsonBuf {
    pub bytes: Vec<u8>,
}

impl JsonBuf {
    pub fn raw(&mut self, s: &str) -> &mut Self {
        self.bytes.extend_from_slice(s.as_bytes());
        self
    }

    pub fn num(&mut self, mut v: u64) -> &mut Self {
        let mut tmp = [0u8; 20];
        let mut i = tmp.len();
        loop {
            i -= 1;
            tmp[i] = b'0' + (v % 10) as u8;
            v /= 10;
            if v == 0 {
                break;
            }
        }
        self.bytes.extend_from_slice(&tmp[i..]);
        self
    }

    /// A string value. Trace strings never need escaping beyond quotes and
    /// backslashes.
    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes.push(b'"');
        for b in s.bytes() {
            if b == b'"' || b == b'\\' {
                self.bytes.push(b'\\');
            }
            self.bytes.push(b);
        }
        self.bytes.push(b'"');
        self
    }

    pub fn key(&mut self, k: &str) -> &mut Self {
        self.bytes.push(b',');
        self.str(k);
        self.bytes.push(b':');
        self
    }

    pub fn num_list(&mut self, items: impl IntoIterator<Item = u64>) -> &mut Self {
        self.bytes.push(b'[');
        for (i, v) in items.into_iter().enumerate() {
            if i > 0 {
                self.bytes.push(b',');
            }
            self.num(v);
        }
        self.bytes.push(b']');
        self
    }

    fn est(&mut self, v: EstValue) -> &mut Self {
        match v {
            EstValue::Zero => self.raw("0"),
            EstValue::One => self.raw("1"),
            EstValue::Bot => self.raw("\"bot\""),
        }
    }

    fn set(&mut self, s: ValueSet) -> &mut Self {
        self.bytes.push(b'[');
        for (i, v) in s.iter().enumerate() {
            if i > 0 {
                self.bytes.push(b',');
            }
            self.est(v);
        }
        self.bytes.push(b']');
        self
    }

    fn tag(&mut self, tag: InstanceTag) -> &mut Self {
        match tag {
            InstanceTag::Stage { round, phase } => {
                self.raw("{\"variant\":\"stage\",\"round\":")
                    .num(round.get().into());
                self.raw(",\"phase\":")
                    .raw(if phase == Phase::Zero { "0" } else { "1" })
                    .raw("}")
            }
            InstanceTag::Est { round } => self
                .raw("{\"variant\":\"est\",\"round\":")
                .num(round.get().into())
                .raw("}"),
        }
    }

    fn round_tag(&mut self, round: Round) -> &mut Self {
        self.raw("{\"variant\":\"round\",\"round\":")
            .num(round.get().into())
            .raw("}")
    }

    /// `{"kind":..,"tag":..,"value":..,"sender":..}`.
    pub fn message(&mut self, msg: &Message) -> &mut Self {
        self.raw("{\"kind\":")
            .str(msg.payload.kind_name())
            .raw(",\"tag\":");
        match msg.payload {
            Payload::Bval { tag, value }
            | Payload::Sval { tag, value }
            | Payload::Aux { tag, value } => {
                self.tag(tag).raw(",\"value\":").est(value);
            }
            Payload::AuxSet { round, set } => {
                self.round_tag(round).raw(",\"value\":").set(set);
            }
            Payload::AuxBin { round, value } => {
                self.round_tag(round).raw(",\"value\":").est(value.into());
            }
        }
        self.raw(",\"sender\":").num(msg.sender.0.into()).raw("}")
    }
}

/// Accumulates the digest and, optionally, the lines of one run's trace.
pub struct TraceSink {
    hash: u64,
    seq: u64,
    buf: JsonBuf,
    lines: Option<Vec<String>>,
}

impl TraceSink {
    pub fn new(keep_lines: bool) -> Self {
        TraceSink {
            hash: FNV_OFFSET,
            seq: 0,
            buf: JsonBuf::default(),
            lines: keep_lines.then(Vec::new),
        }
    }

    pub fn digest(&self) -> u64 {
        self.hash
    }

    pub fn into_lines(self) -> Option<Vec<String>> {
        self.lines
    }

    /// Starts a record: `{"seq":N,"kind":"<kind>"`. Finish with [`Self::end`].
    pub fn begin(&mut self, kind: &str) -> &mut JsonBuf {
        self.buf.bytes.clear();
        self.buf
            .raw("{\"seq\":")
            .num(self.seq)
            .raw(",\"kind\":")
            .str(kind);
        self.seq += 1;
        &mut self.buf
    }

    /// Starts a record the caller writes in full, seq included.
    pub fn begin_raw(&mut self) -> &mut JsonBuf {
        self.buf.bytes.clear();
        self.seq += 1;
        &mut self.buf
    }

    /// Closes a record started with [`Self::begin`].
    pub fn end(&mut self) {
        self.buf.bytes.push(b'}');
        self.commit();
    }

    /// Terminates the current line and folds it into the digest.
    pub fn commit(&mut self) {
        self.buf.bytes.push(b'\n');
        self.hash = fnv1a(self.hash, &self.buf.bytes);
        if let Some(lines) = &mut self.lines {
            let text = &self.buf.bytes[..self.buf.bytes.len() - 1];
            lines.push(String::from_utf8_lossy(text).into_owned());
        }
    }

    pub fn broadcast(&mut self, msg: &Message, to: Option<&[ProcessId]>) {
        let b = self.begin("broadcast");
        b.key("msg").message(msg);
        if let Some(to) = to {
            b.key("to").num_list(to.iter().map(|p| u64::from(p.0)));
        }
        self.end();
    }

    pub fn deliver(&mut self, to: ProcessId, msg: &Message) {
        self.begin("deliver")
            .key("to")
            .num(to.0.into())
            .key("msg")
            .message(msg);
        self.end();
    }

    pub fn drop_message(&mut self, to: ProcessId, msg: &Message) {
        self.begin("drop")
            .key("to")
            .num(to.0.into())
            .key("msg")
            .message(msg);
        self.end();
    }

    pub fn coin_request(&mut self, round: Round, pid: ProcessId) {
        self.begin("coin-request")
            .key("round")
            .num(round.get().into())
            .key("pid")
            .num(pid.0.into());
        self.end();
    }

    pub fn coin_reveal(&mut self, round: Round, assignment: &[BinValue]) {
        self.begin("coin-reveal")
            .key("round")
            .num(round.get().into())
            .key("assignment")
            .num_list(assignment.iter().map(|b| u64::from(b.as_u8())));
        self.end();
    }

    pub fn decide(&mut self, pid: ProcessId, value: BinValue, round: Round) {
        self.begin("decide")
            .key("pid")
            .num(pid.0.into())
            .key("value")
            .num(value.as_u8().into())
            .key("round")
            .num(round.get().into());
        self.end();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a(FNV_OFFSET, b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(FNV_OFFSET, b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(FNV_OFFSET, b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn message_encoding() {
        let msg = Message {
            sender: ProcessId(2),
            payload: Payload::Bval {
                tag: InstanceTag::stage(3, Phase::One),
                value: EstValue::Bot,
            },
        };
        let mut b = JsonBuf::default();
        b.message(&msg);
        assert_eq!(
            core::str::from_utf8(&b.bytes).unwrap(),
            r#"{"kind":"BVAL","tag":{"variant":"stage","round":3,"phase":1},"value":"bot","sender":2}"#
        );
        let msg = Message {
            sender: ProcessId(0),
            payload: Payload::AuxSet {
                round: Round(7),
                set: ValueSet::BINARY,
            },
        };
        let mut b = JsonBuf::default();
        b.message(&msg);
        assert_eq!(
            core::str::from_utf8(&b.bytes).unwrap(),
            r#"{"kind":"AUXSET","tag":{"variant":"round","round":7},"value":[0,1],"sender":0}"#
        );
    }

    #[test]
    fn sink_digest_matches_line_digest() {
        let mut sink = TraceSink::new(true);
        sink.coin_request(Round(1), ProcessId(3));
        sink.coin_reveal(Round(1), &[BinValue::One, BinValue::Zero]);
        sink.decide(ProcessId(1), BinValue::One, Round(2));
        let digest = sink.digest();
        let lines = sink.into_lines().unwrap();
        assert_eq!(
            lines,
            vec![
                r#"{"seq":0,"kind":"coin-request","round":1,"pid":3}"#,
                r#"{"seq":1,"kind":"coin-reveal","round":1,"assignment":[1,0]}"#,
                r#"{"seq":2,"kind":"decide","pid":1,"value":1,"round":2}"#,
            ]
        );
        assert_eq!(digest_lines(lines.iter().map(String::as_str)), digest);
    }
}
