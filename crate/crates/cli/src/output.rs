//! CSV and JSON writers with a reproducibility header.
//!
//! Only the timestamp line changes between reruns of the same configuration.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// Header fields written before every table.
#[derive(Debug, Clone)]
pub struct Metadata {
    pub kind: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub timestamp: String,
    /// Extra `key: value` lines.
    pub extra: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(kind: &'static str, seed: u64, config_hash: String) -> Self {
        Metadata {
            kind,
            seed,
            config_hash,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal, with `nan`/`inf` spelled in lowercase.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v != 0.0 && !(1e-4..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn render_csv(meta: &Metadata, table: &Table) -> String {
    let mut s = String::new();
    writeln!(s, "# qpe-mproj {}", meta.kind).unwrap();
    writeln!(s, "# seed: {}", meta.seed).unwrap();
    writeln!(s, "# config_sha256: {}", meta.config_hash).unwrap();
    for (k, v) in &meta.extra {
        writeln!(s, "# {k}: {v}").unwrap();
    }
    writeln!(s, "# timestamp: {}", meta.timestamp).unwrap();
    writeln!(s, "{}", table.columns.join(",")).unwrap();
    for row in &table.rows {
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    s
}

pub fn render_json(meta: &Metadata, body: serde_json::Value) -> String {
    let mut m = serde_json::Map::new();
    m.insert("experiment".into(), meta.kind.into());
    m.insert("seed".into(), meta.seed.into());
    m.insert("config_sha256".into(), meta.config_hash.clone().into());
    for (k, v) in &meta.extra {
        m.insert(k.clone(), v.clone().into());
    }
    m.insert("timestamp".into(), meta.timestamp.clone().into());
    m.insert("report".into(), body);
    let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(m)).expect("JSON renders");
    s.push('\n');
    s
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Reads `x,branch[,...]` rows, skipping `#` comments and a header line.
pub fn parse_samples(text: &str) -> anyhow::Result<Vec<(f64, u8)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("x,") || line == "x" {
            continue;
        }
        let mut fields = line.split(',');
        let x: f64 = fields
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("line {}: bad phase: {e}", i + 1))?;
        let branch: u8 = match fields.next() {
            Some(b) => b.trim().parse().map_err(|e| anyhow::anyhow!("line {}: bad branch: {e}", i + 1))?,
            None => 0,
        };
        if !x.is_finite() {
            anyhow::bail!("line {}: non-finite phase", i + 1);
        }
        out.push((x, branch));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata { kind: "fig3", seed: 7, config_hash: "ab".into(), timestamp: "T".into(), extra: vec![] }
    }

    #[test]
    fn csv_has_header_then_rows() {
        let mut t = Table::new(vec!["a", "b"]);
        t.push(vec![num(1.5), num(f64::NAN)]);
        let s = render_csv(&meta(), &t);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# qpe-mproj fig3");
        assert_eq!(lines[1], "# seed: 7");
        assert_eq!(lines[3], "# timestamp: T");
        assert_eq!(&lines[4..], &["a,b", "1.5,nan"]);
    }

    #[test]
    fn samples_round_trip() {
        let text = "# c\nx,branch,had_error,phi_ref\n-2.5,0,0,1.0\n-2.25,1,1,0.5\n";
        assert_eq!(parse_samples(text).unwrap(), vec![(-2.5, 0), (-2.25, 1)]);
        assert!(parse_samples("abc,0\n").is_err());
    }

    #[test]
    fn num_round_trips() {
        let v = 0.1 + 0.2;
        assert_eq!(num(v).parse::<f64>().unwrap(), v);
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
        assert_eq!(num(3.5e-12), "3.5e-12");
        assert_eq!(num(-0.25), "-0.25");
    }
}
