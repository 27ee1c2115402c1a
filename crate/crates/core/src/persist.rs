//! On-disk formats for trained states and training logs.
//!
//! State file layout, all little-endian:
//!
//! | offset | size      | content                 |
//! |--------|-----------|-------------------------|
//! | 0      | 4         | magic `b"SNSM"`         |
//! | 4      | 4         | version (`u32`, = 1)    |
//! | 8      | 4         | `k` (`u32`)             |
//! | 12     | 4         | `n` (`u32`)             |
//! | 16     | 8·k·n     | `W`, row-major `f64`    |
//! | ...    | 8·k·k     | `M`, row-major `f64`    |
//! | ...    | 8·k       | `b`, `f64`              |

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::error::{NsmError, Result};
use crate::learning::{Checkpoint, TrainLog};
use crate::types::SynapticState;

pub const STATE_MAGIC: [u8; 4] = *b"SNSM";
pub const STATE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_state(state: &SynapticState) -> Vec<u8> {
    let (k, n) = (state.k(), state.n());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (k * n + k * k + k));
    out.extend_from_slice(&STATE_MAGIC);
    out.extend_from_slice(&STATE_VERSION.to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    // iter() on a standard-layout array walks row-major
    for v in state.w.iter().chain(state.m.iter()).chain(state.b.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<SynapticState> {
    let parse = |offset: usize, message: String| NsmError::Parse { offset, message };
    if bytes.len() < HEADER_LEN {
        return Err(parse(bytes.len(), format!("truncated header ({} bytes)", bytes.len())));
    }
    if bytes[0..4] != STATE_MAGIC {
        return Err(parse(0, format!("bad magic {:02x?}", &bytes[0..4])));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"));
    let version = word(4);
    if version != STATE_VERSION {
        return Err(parse(4, format!("unsupported version {version}")));
    }
    let k = word(8) as usize;
    let n = word(12) as usize;
    if k == 0 || n == 0 {
        return Err(parse(8, format!("degenerate dimensions k = {k}, n = {n}")));
    }
    let count = k
        .checked_mul(n)
        .and_then(|kn| k.checked_mul(k).and_then(|kk| kn.checked_add(kk)))
        .and_then(|v| v.checked_add(k))
        .ok_or_else(|| parse(8, "dimension overflow".into()))?;
    let expected = count
        .checked_mul(8)
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| parse(8, "dimension overflow".into()))?;
    if bytes.len() != expected {
        return Err(parse(
            bytes.len().min(expected),
            format!("payload length {} does not match k = {k}, n = {n} (expected {expected})", bytes.len()),
        ));
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let w: Vec<f64> = values.by_ref().take(k * n).collect();
    let m: Vec<f64> = values.by_ref().take(k * k).collect();
    let b: Vec<f64> = values.collect();
    SynapticState::new(
        Array2::from_shape_vec((k, n), w).expect("length checked"),
        Array2::from_shape_vec((k, k), m).expect("length checked"),
        Array1::from(b),
    )
}

pub fn write_state<W: Write>(state: &SynapticState, mut out: W) -> Result<()> {
    out.write_all(&encode_state(state))?;
    Ok(())
}

pub fn read_state<R: Read>(mut input: R) -> Result<SynapticState> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_state(&bytes)
}

pub const TRAIN_LOG_HEADER: &str = "step,nsm_cost,active_fraction,eta";

pub fn write_train_log<W: Write>(log: &TrainLog, mut out: W) -> Result<()> {
    writeln!(out, "{TRAIN_LOG_HEADER}")?;
    for c in &log.checkpoints {
        writeln!(out, "{},{:?},{:?},{:?}", c.step, c.nsm_cost, c.active_fraction, c.eta)?;
    }
    Ok(())
}

pub fn read_train_log(text: &str) -> Result<TrainLog> {
    let mut lines = text.lines();
    let mut offset = 0;
    match lines.next() {
        Some(h) if h.trim() == TRAIN_LOG_HEADER => offset += h.len() + 1,
        _ => {
            return Err(NsmError::Parse {
                offset: 0,
                message: format!("expected header {TRAIN_LOG_HEADER:?}"),
            })
        }
    }
    let mut log = TrainLog::default();
    for line in lines {
        if line.trim().is_empty() {
            offset += line.len() + 1;
            continue;
        }
        let bad = |message: String| NsmError::Parse { offset, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        log.checkpoints.push(Checkpoint {
            step: fields[0].trim().parse().map_err(|e| bad(format!("{:?}: {e}", fields[0])))?,
            nsm_cost: num(fields[1])?,
            active_fraction: num(fields[2])?,
            eta: num(fields[3])?,
        });
        offset += line.len() + 1;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let s = SynapticState::new(array![[1.0, 2.0]], array![[3.0]], array![4.0]).unwrap();
        let bytes = encode_state(&s);
        assert_eq!(&bytes[0..4], b"SNSM");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 8 * 4);
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[40..48], &4.0f64.to_le_bytes());
    }

    #[test]
    fn malformed_state_files() {
        let s = SynapticState::new(array![[1.0, 2.0]], array![[3.0]], array![4.0]).unwrap();
        let good = encode_state(&s);
        assert!(matches!(decode_state(&good[..10]), Err(NsmError::Parse { .. })));
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_state(&bad_magic), Err(NsmError::Parse { offset: 0, .. })));
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(decode_state(&bad_version), Err(NsmError::Parse { offset: 4, .. })));
        assert!(decode_state(&good[..good.len() - 1]).is_err());
        let mut huge = good.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_state(&huge).is_err());
    }

    #[test]
    fn train_log_csv() {
        let log = TrainLog {
            checkpoints: vec![
                Checkpoint { step: 0, nsm_cost: 0.1 + 0.2, active_fraction: 1.0 / 3.0, eta: 1e-3 },
                Checkpoint { step: 100, nsm_cost: 1e-300, active_fraction: 0.0, eta: 0.5e-5 },
            ],
        };
        let mut buf = Vec::new();
        write_train_log(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,nsm_cost,active_fraction,eta\n0,0.30000000000000004,"));
        assert_eq!(read_train_log(&text).unwrap(), log);
        assert!(read_train_log("step,cost\n").is_err());
        assert!(read_train_log("step,nsm_cost,active_fraction,eta\n1,2,3\n").is_err());
    }

    proptest! {
        #[test]
        fn state_bytes_round_trip(k in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = Array2::from_shape_fn((k, n), |_| rng.random::<f64>() * 1e3 - 5e2);
            let mut m = Array2::from_shape_fn((k, k), |_| rng.random::<f64>());
            for i in 0..k { for j in 0..i { m[[i, j]] = m[[j, i]]; } }
            let b = Array1::from_shape_fn(k, |_| -rng.random::<f64>());
            let s = SynapticState::new(w, m, b).unwrap();
            let bytes = encode_state(&s);
            let back = decode_state(&bytes).unwrap();
            prop_assert_eq!(encode_state(&back), bytes);
            prop_assert_eq!(back, s);
        }
    }
}
