use crate::error::{Error, Result};

/// One row of a likelihood table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    /// Stack size, or `None` for rows without one (compressors).
    pub s: Option<usize>,
    pub model: String,
    pub config: String,
    pub bpf: f64,
}

/// An externally measured lossless-compression rate. Never computed here.
#[derive(Clone, Debug, PartialEq)]
pub struct FlacReference {
    pub corpus: &'static str,
    pub split: &'static str,
    pub bpf: f64,
    pub source: &'static str,
}

impl FlacReference {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            s: None,
            model: "FLAC".into(),
            config: format!("Linear PCM [{}; {} {}]", self.source, self.corpus, self.split),
            bpf: self.bpf,
        }
    }
}

/// Published FLAC rates on 16-bit linear PCM.
pub fn flac_references() -> Vec<FlacReference> {
    let r = |corpus, split, bpf| FlacReference {
        corpus,
        split,
        bpf,
        source: "ingested",
    };
    vec![
        r("timit", "test", 8.582),
        r("librispeech", "dev-clean", 9.390),
        r("librispeech", "dev-other", 9.292),
        r("librispeech", "test-clean", 9.700),
        r("librispeech", "test-other", 9.272),
    ]
}

fn quote(field: &str) -> String {
    if field.contains([',', '"']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// `s,model,config,bpf` table.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut out = String::from("s,model,config,bpf\n");
    for r in rows {
        let s = r.s.map_or("-".to_string(), |s| s.to_string());
        out.push_str(&format!("{s},{},{},{:.4}\n", quote(&r.model), quote(&r.config), r.bpf));
    }
    out
}

fn split_csv(line: &str) -> Vec<String> {
    let mut fields = vec![String::new()];
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                chars.next();
                fields.last_mut().unwrap().push('"');
            }
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(String::new()),
            _ => fields.last_mut().unwrap().push(c),
        }
    }
    fields
}

pub fn parse_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("s,model,config,bpf") => {}
        other => return Err(Error::Format(format!("unexpected report header {other:?}"))),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f = split_csv(l);
            if f.len() != 4 {
                return Err(Error::Format(format!("report row has {} fields: {l}", f.len())));
            }
            Ok(ReportRow {
                s: if f[0] == "-" {
                    None
                } else {
                    Some(f[0].parse().map_err(|e| Error::Format(format!("bad s {:?}: {e}", f[0])))?)
                },
                model: f[1].clone(),
                config: f[2].clone(),
                bpf: f[3].parse().map_err(|e| Error::Format(format!("bad bpf {:?}: {e}", f[3])))?,
            })
        })
        .collect()
}
