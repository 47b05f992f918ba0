//! On-disk formats for probe inputs and results.
//!
//! Representation records are little-endian: `u32` id length, UTF-8 id,
//! `u64` T, `u64` D, then `T * D` `f64` values row-major.

use std::fs;
use std::path::Path;

use super::asr::Budget;
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RepRecord {
    pub id: String,
    pub rows: Vec<Vec<f64>>,
}

pub fn encode_records(records: &[RepRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        let d = r.rows.first().map_or(0, Vec::len);
        ensure!(r.rows.iter().all(|row| row.len() == d), "record {} has ragged rows", r.id);
        out.extend((r.id.len() as u32).to_le_bytes());
        out.extend(r.id.as_bytes());
        out.extend((r.rows.len() as u64).to_le_bytes());
        out.extend((d as u64).to_le_bytes());
        for v in r.rows.iter().flatten() {
            out.extend(v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<RepRecord>> {
    let mut pos = 0;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format(format!("representation dump truncated in {what} at byte {pos}")))?;
        pos += n;
        Ok(s)
    };
    let mut out = Vec::new();
    loop {
        let Ok(head) = take(4, "id length") else { break };
        let n = u32::from_le_bytes(head.try_into().expect("4 bytes")) as usize;
        let id = String::from_utf8(take(n, "id")?.to_vec()).map_err(|_| Error::Format("record id is not UTF-8".into()))?;
        let t = u64::from_le_bytes(take(8, "T")?.try_into().expect("8 bytes")) as usize;
        let d = u64::from_le_bytes(take(8, "D")?.try_into().expect("8 bytes")) as usize;
        let raw = take(t.checked_mul(d).and_then(|x| x.checked_mul(8)).ok_or_else(|| Error::Format("record size overflows".into()))?, "values")?;
        let vals: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let rows = if d == 0 { vec![Vec::new(); t] } else { vals.chunks(d).map(<[f64]>::to_vec).collect() };
        out.push(RepRecord { id, rows });
    }
    Ok(out)
}

/// Span manifest: a `# id` header line per utterance, then `start,end,class`.
pub fn format_span_manifest(utts: &[(String, Vec<(usize, usize, u32)>)]) -> String {
    let mut s = String::new();
    for (id, spans) in utts {
        s.push_str(&format!("# {id}\n"));
        for (a, b, c) in spans {
            s.push_str(&format!("{a},{b},{c}\n"));
        }
    }
    s
}

pub fn parse_span_manifest(text: &str) -> Result<Vec<(String, Vec<(usize, usize, u32)>)>> {
    let mut out: Vec<(String, Vec<(usize, usize, u32)>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(id) = line.strip_prefix('#') {
            out.push((id.trim().to_string(), Vec::new()));
            continue;
        }
        let bad = || Error::Format(format!("span manifest line {}: `{line}`", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let span = (
            f[0].trim().parse().map_err(|_| bad())?,
            f[1].trim().parse().map_err(|_| bad())?,
            f[2].trim().parse().map_err(|_| bad())?,
        );
        out.last_mut().ok_or_else(bad)?.1.push(span);
    }
    Ok(out)
}

pub fn write_dump(dir: impl AsRef<Path>, records: &[RepRecord], spans: &[(String, Vec<(usize, usize, u32)>)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("representations.bin"), encode_records(records)?)?;
    fs::write(dir.join("spans.txt"), format_span_manifest(spans))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerRow {
    pub budget: Budget,
    pub representation: String,
    pub per: f64,
}

pub fn format_per_csv(rows: &[PerRow]) -> String {
    let mut s = String::from("budget,representation,per\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.6}\n", r.budget, r.representation, r.per));
    }
    s
}

pub fn parse_per_csv(text: &str) -> Result<Vec<PerRow>> {
    let mut lines = text.lines();
    ensure!(lines.next().map(str::trim) == Some("budget,representation,per"), "PER CSV header mismatch");
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(Error::Format(format!("bad PER row `{l}`")));
            }
            Ok(PerRow {
                budget: f[0].parse()?,
                representation: f[1].to_string(),
                per: f[2].parse().map_err(|_| Error::Format(format!("bad PER value in `{l}`")))?,
            })
        })
        .collect()
}

/// Representation with the lowest PER per budget.
pub fn best_per_budget(rows: &[PerRow]) -> Vec<&PerRow> {
    Budget::ALL
        .iter()
        .filter_map(|b| rows.iter().filter(|r| r.budget == *b).min_by(|x, y| x.per.total_cmp(&y.per)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let recs = vec![
            RepRecord {
                id: "a".into(),
                rows: vec![vec![1.0, -2.5], vec![0.125, 3.0]],
            },
            RepRecord {
                id: "bé".into(),
                rows: vec![vec![f64::MIN_POSITIVE]],
            },
        ];
        let bytes = encode_records(&recs).unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 16 + 32 + 4 + 3 + 16 + 8);
        assert_eq!(decode_records(&bytes).unwrap(), recs);
        assert!(decode_records(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = vec![("u0".to_string(), vec![(0, 10, 2), (10, 25, 0)]), ("u1".to_string(), vec![])];
        let text = format_span_manifest(&m);
        assert!(text.contains("0,10,2\n"));
        assert_eq!(parse_span_manifest(&text).unwrap(), m);
        assert!(parse_span_manifest("1,2,3\n").is_err());
    }

    #[test]
    fn per_csv_and_argmin() {
        let rows = vec![
            PerRow { budget: Budget::Full, representation: "z1".into(), per: 0.3 },
            PerRow { budget: Budget::Full, representation: "z2".into(), per: 0.2 },
            PerRow { budget: Budget::TenMinutes, representation: "z1".into(), per: 0.5 },
        ];
        let text = format_per_csv(&rows);
        assert!(text.starts_with("budget,representation,per\n3.7h,z1,0.300000\n"));
        assert_eq!(parse_per_csv(&text).unwrap(), rows);
        let best = best_per_budget(&rows);
        assert_eq!(best.len(), 2);
        assert_eq!(best[1].representation, "z2");
    }
}
