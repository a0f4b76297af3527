//! Transition datasets and their CSV form.
//!
//! CSV layout: header `s0..s{n-1},a,sp0..sp{n-1},r,done`, one record per
//! line, reals written with 17 significant digits, `done` as `0`/`1`.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{ActionId, StateVec, TransitionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Environment,
    Model,
}

/// Ordered transition records sharing one state dimension, with optional
/// FIFO capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: VecDeque<TransitionRecord>,
    provenance: Provenance,
    capacity: Option<usize>,
}

impl Dataset {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            records: VecDeque::new(),
            provenance,
            capacity: None,
        }
    }

    /// Dataset that evicts its oldest record once `capacity` is exceeded.
    pub fn with_capacity(provenance: Provenance, capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            records: VecDeque::with_capacity(capacity.min(1 << 16)),
            provenance,
            capacity: Some(capacity),
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// State dimension shared by every record, `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        self.records.front().map(TransitionRecord::dim)
    }

    pub fn push(&mut self, rec: TransitionRecord) -> Result<()> {
        if let Some(d) = self.dim() {
            if rec.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: rec.dim(),
                });
            }
        }
        self.records.push_back(rec);
        if let Some(cap) = self.capacity {
            while self.records.len() > cap {
                self.records.pop_front();
            }
        }
        Ok(())
    }

    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        for rec in other.records {
            self.push(rec)?;
        }
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&TransitionRecord> {
        self.records.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.records.iter()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Csv(e.to_string());
        let n = self.dim().unwrap_or(0);
        let mut header: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        header.push("a".into());
        header.extend((0..n).map(|i| format!("sp{i}")));
        header.push("r".into());
        header.push("done".into());
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for rec in &self.records {
            let mut fields: Vec<String> = rec.state.iter().map(|&x| fmt_real(x)).collect();
            fields.push(rec.action.0.to_string());
            fields.extend(rec.next_state.iter().map(|&x| fmt_real(x)));
            fields.push(fmt_real(rec.reward));
            fields.push(if rec.terminal { "1" } else { "0" }.into());
            writeln!(out, "{}", fields.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, provenance: Provenance) -> Result<Self> {
        let mut lines = input.lines();
        let header = match lines.next() {
            Some(h) => h.map_err(|e| Error::Csv(e.to_string()))?,
            None => return Err(Error::Csv("missing header".into())),
        };
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 3 || (cols.len() - 3) % 2 != 0 {
            return Err(Error::Csv(format!("unexpected header `{header}`")));
        }
        let n = (cols.len() - 3) / 2;
        let mut ds = Dataset::new(provenance);
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Csv(format!("line {}: expected {} fields", lineno + 2, cols.len())));
            }
            let real = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Csv(format!("line {}: {e}", lineno + 2)))
            };
            let state = StateVec::new(f[..n].iter().map(|s| real(s)).collect::<Result<_>>()?)?;
            let action = f[n]
                .parse::<usize>()
                .map_err(|e| Error::Csv(format!("line {}: {e}", lineno + 2)))?;
            let next = StateVec::new(f[n + 1..2 * n + 1].iter().map(|s| real(s)).collect::<Result<_>>()?)?;
            let reward = real(f[2 * n + 1])?;
            let terminal = match f[2 * n + 2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Csv(format!("line {}: bad done flag `{other}`", lineno + 2))),
            };
            ds.push(TransitionRecord::new(state, ActionId(action), next, reward, terminal)?)?;
        }
        Ok(ds)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(dim: usize, v: f64) -> TransitionRecord {
        let s = StateVec::new(vec![v; dim]).unwrap();
        TransitionRecord::new(s.clone(), ActionId(1), s, v, false).unwrap()
    }

    #[test]
    fn push_grows_and_preserves_order() {
        let mut ds = Dataset::new(Provenance::Environment);
        ds.push(rec(2, 0.0)).unwrap();
        assert_eq!(ds.len(), 1);
        ds.push(rec(2, 1.0)).unwrap();
        ds.push(rec(2, 2.0)).unwrap();
        let before: Vec<_> = ds.iter().cloned().collect();
        ds.push(rec(2, 3.0)).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.iter().take(3).cloned().collect::<Vec<_>>(), before);
    }

    #[test]
    fn push_rejects_dimension_mismatch() {
        let mut ds = Dataset::new(Provenance::Model);
        ds.push(rec(2, 0.0)).unwrap();
        assert_eq!(
            ds.push(rec(3, 0.0)),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn fifo_capacity_evicts_oldest() {
        let mut ds = Dataset::with_capacity(Provenance::Model, 2);
        for v in 0..4 {
            ds.push(rec(1, v as f64)).unwrap();
        }
        let rewards: Vec<f64> = ds.iter().map(|r| r.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
    }

    #[test]
    fn csv_header_layout() {
        let mut ds = Dataset::new(Provenance::Environment);
        ds.push(rec(2, 0.5)).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "s0,s1,a,sp0,sp1,r,done");
        assert_eq!(
            lines.next().unwrap(),
            "5.0000000000000000e-1,5.0000000000000000e-1,1,5.0000000000000000e-1,5.0000000000000000e-1,5.0000000000000000e-1,0"
        );
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(
            (prop::collection::vec(-1e6f64..1e6, 3), 0usize..4, prop::collection::vec(-1e6f64..1e6, 3), -1e3f64..1e3, any::<bool>()),
            1..20,
        )) {
            let mut ds = Dataset::new(Provenance::Environment);
            for (s, a, sp, r, d) in rows {
                ds.push(TransitionRecord::new(
                    StateVec::new(s).unwrap(), ActionId(a), StateVec::new(sp).unwrap(), r, d,
                ).unwrap()).unwrap();
            }
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let back = Dataset::read_csv(&buf[..], Provenance::Environment).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
