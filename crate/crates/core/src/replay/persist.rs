//! Newline-delimited JSON persistence: one header line, then one entry per line.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ReplayBuffer, ReplayEntry, ReplayError};

pub const BUFFER_FORMAT_VERSION: &str = "btp-buffer/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferHeader {
    pub version: String,
    pub rng_seed: u64,
    pub capacity: Option<usize>,
}

/// Serialises a buffer to its on-disk text form.
pub fn to_ndjson(buffer: &ReplayBuffer) -> String {
    let header = BufferHeader {
        version: BUFFER_FORMAT_VERSION.to_string(),
        rng_seed: buffer.rng_seed(),
        capacity: buffer.capacity(),
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for entry in buffer.iter() {
        out.push_str(&serde_json::to_string(entry).expect("entry serialises"));
        out.push('\n');
    }
    out
}

pub fn from_reader<R: BufRead>(reader: R) -> Result<ReplayBuffer, ReplayError> {
    let mut header: Option<BufferHeader> = None;
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| ReplayError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| ReplayError::Parse { line: line_no, message };
        match &header {
            None => {
                let h: BufferHeader = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
                if h.version != BUFFER_FORMAT_VERSION {
                    return Err(parse_err(format!(
                        "unsupported buffer version {:?}, expected {BUFFER_FORMAT_VERSION:?}",
                        h.version
                    )));
                }
                header = Some(h);
            }
            Some(_) => {
                let e: ReplayEntry = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
                e.validate().map_err(|e| parse_err(e.to_string()))?;
                entries.push(e);
            }
        }
    }
    let header = header.ok_or(ReplayError::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    ReplayBuffer::from_parts(entries, header.capacity, header.rng_seed)
}

pub fn from_ndjson(text: &str) -> Result<ReplayBuffer, ReplayError> {
    from_reader(text.as_bytes())
}

pub fn persist(buffer: &ReplayBuffer, path: &Path) -> Result<(), ReplayError> {
    let file = File::create(path).map_err(|e| ReplayError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_ndjson(buffer).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| ReplayError::io(path, e))
}

pub fn load(path: &Path) -> Result<ReplayBuffer, ReplayError> {
    let file = File::open(path).map_err(|e| ReplayError::io(path, e))?;
    from_reader(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::PassRate;

    #[test]
    fn empty_buffer_has_header_only() {
        let b = ReplayBuffer::new(Some(4), 42).unwrap();
        let text = to_ndjson(&b);
        assert_eq!(text, "{\"version\":\"btp-buffer/1\",\"rng_seed\":42,\"capacity\":4}\n");
        assert_eq!(from_ndjson(&text).unwrap(), b);
    }

    #[test]
    fn round_trip_preserves_bits() {
        let mut b = ReplayBuffer::unbounded(7);
        let mut e = ReplayEntry::new("t1", vec!["x".into(), "<eos>".into()], "x", -1.234567890123456789).unwrap();
        e.pass_rate = PassRate::Tested(2.0 / 3.0);
        b.insert(e).unwrap();
        b.insert(ReplayEntry::new("t2", vec!["<eos>".into()], "", -0.1).unwrap()).unwrap();
        let back = from_ndjson(&to_ndjson(&b)).unwrap();
        assert_eq!(back, b);
        for (x, y) in back.iter().zip(b.iter()) {
            assert_eq!(x.seq_logprob.to_bits(), y.seq_logprob.to_bits());
            assert_eq!(x.seq_prob_normalized.to_bits(), y.seq_prob_normalized.to_bits());
        }
    }

    #[test]
    fn reports_line_numbers() {
        let text = "{\"version\":\"btp-buffer/1\",\"rng_seed\":0,\"capacity\":null}\n{not json}\n";
        match from_ndjson(text) {
            Err(ReplayError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match from_ndjson("{\"version\":\"other\",\"rng_seed\":0,\"capacity\":null}\n") {
            Err(ReplayError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(from_ndjson(""), Err(ReplayError::Parse { .. })));
    }

    #[test]
    fn rejects_inconsistent_normalized_probability() {
        let text = concat!(
            "{\"version\":\"btp-buffer/1\",\"rng_seed\":0,\"capacity\":null}\n",
            "{\"task_id\":\"t\",\"program_tokens\":[\"x\"],\"program_text\":\"x\",\"seq_logprob\":-1.0,",
            "\"seq_prob_normalized\":0.9,\"pass_rate\":null,\"insertion_index\":0}\n"
        );
        assert!(matches!(from_ndjson(text), Err(ReplayError::Parse { line: 2, .. })));
    }
}
