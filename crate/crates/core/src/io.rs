//! Edge-list and latent-position file formats.
//!
//! Edge lists are UTF-8 text with one edge per line given as two
//! whitespace-separated 0-based vertex labels. Lines starting with `#` are
//! comments. An optional `%n=<n>` header fixes the vertex count; without it
//! the count is one more than the largest label seen.
//!
//! Latent CSV files have no header: one row per vertex, `d` comma-separated
//! decimal fields.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{RdpgError, Result};
use crate::graph::{Graph, LatentPositions};

/// A parsed edge list.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub graph: Graph,
    /// Edge lines dropped because the pair was already present.
    pub duplicates: usize,
}

fn io_error(path: &Path, source: std::io::Error) -> RdpgError {
    RdpgError::Io { path: path.to_path_buf(), source }
}

fn parse_label(token: &str, line: usize) -> Result<usize> {
    token.parse::<usize>().map_err(|_| RdpgError::Parse { line, message: format!("invalid vertex label {token:?}") })
}

pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<EdgeList> {
    let mut declared: Option<(usize, usize)> = None;
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| RdpgError::Parse { line: lineno, message: e.to_string() })?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if let Some(rest) = text.strip_prefix('%') {
            let value = rest
                .trim()
                .strip_prefix("n=")
                .ok_or_else(|| RdpgError::Parse { line: lineno, message: format!("unknown header {text:?}") })?;
            if declared.is_some() || !pairs.is_empty() {
                return Err(RdpgError::Parse {
                    line: lineno,
                    message: "%n= header must appear once, before any edge".into(),
                });
            }
            declared = Some((parse_label(value.trim(), lineno)?, lineno));
            continue;
        }
        let mut tokens = text.split_whitespace();
        let (a, b) = match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(a), Some(b), None) => (parse_label(a, lineno)?, parse_label(b, lineno)?),
            _ => {
                return Err(RdpgError::Parse {
                    line: lineno,
                    message: format!("expected two vertex labels, got {text:?}"),
                })
            }
        };
        if a == b {
            return Err(RdpgError::Parse { line: lineno, message: format!("self-loop at vertex {a}") });
        }
        pairs.push((a, b, lineno));
    }
    let n = match declared {
        Some((n, _)) => {
            if let Some(&(a, b, line)) = pairs.iter().find(|&&(a, b, _)| a.max(b) >= n) {
                return Err(RdpgError::VertexOutOfRange { vertex: a.max(b), n, line });
            }
            n
        }
        None => pairs.iter().map(|&(a, b, _)| a.max(b) + 1).max().unwrap_or(0),
    };
    let (graph, duplicates) = Graph::from_edges(n, pairs.into_iter().map(|(a, b, _)| (a, b)))?;
    Ok(EdgeList { graph, duplicates })
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<EdgeList> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    parse_edge_list(BufReader::new(file)).map_err(|e| e.context(path.display().to_string()))
}

/// Writes the `%n=` header followed by edges in lexicographic order.
pub fn write_edge_list_to<W: Write>(g: &Graph, mut out: W) -> std::io::Result<()> {
    writeln!(out, "%n={}", g.n())?;
    for (i, j) in g.edges() {
        writeln!(out, "{i} {j}")?;
    }
    out.flush()
}

pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_edge_list_to(g, BufWriter::new(file)).map_err(|e| io_error(path, e))
}

pub fn parse_latent_csv<R: BufRead>(reader: R) -> Result<LatentPositions> {
    let mut data = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| RdpgError::Parse { line: lineno, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| RdpgError::Parse { line: lineno, message: format!("invalid number {f:?}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        match d {
            None => d = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(RdpgError::Parse {
                    line: lineno,
                    message: format!("expected {d} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        data.extend(row);
        n += 1;
    }
    let d = d.ok_or_else(|| RdpgError::Parse { line: 0, message: "no rows".into() })?;
    Ok(LatentPositions::from_row_slice(n, d, &data))
}

pub fn read_latent_csv(path: impl AsRef<Path>) -> Result<LatentPositions> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    parse_latent_csv(BufReader::new(file)).map_err(|e| e.context(path.display().to_string()))
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn write_latent_csv_to<W: Write>(x: &LatentPositions, mut out: W) -> std::io::Result<()> {
    let m = x.matrix();
    for i in 0..m.nrows() {
        let fields: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()
}

pub fn write_latent_csv(x: &LatentPositions, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_latent_csv_to(x, BufWriter::new(file)).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<EdgeList> {
        parse_edge_list(text.as_bytes())
    }

    #[test]
    fn header_comments_and_duplicates() {
        let el = parse("# toy\n%n=5\n0 1\n1 0\n2 4\n\n# end\n0 1\n").unwrap();
        assert_eq!(el.graph.n(), 5);
        assert_eq!(el.graph.edge_count(), 2);
        assert_eq!(el.duplicates, 2);
    }

    #[test]
    fn inferred_vertex_count() {
        let el = parse("0 7\n").unwrap();
        assert_eq!(el.graph.n(), 8);
    }

    #[test]
    fn self_loop_reports_line() {
        match parse("0 1\n3 3\n") {
            Err(RdpgError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_reports_line() {
        match parse("%n=3\n0 1\n1 3\n") {
            Err(RdpgError::VertexOutOfRange { vertex, n, line }) => assert_eq!((vertex, n, line), (3, 3, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse("0 1 2\n"), Err(RdpgError::Parse { line: 1, .. })));
        assert!(matches!(parse("0 x\n"), Err(RdpgError::Parse { line: 1, .. })));
        assert!(matches!(parse("0 -1\n"), Err(RdpgError::Parse { line: 1, .. })));
        assert!(matches!(parse("0 1\n%n=4\n"), Err(RdpgError::Parse { line: 2, .. })));
    }

    #[test]
    fn edge_list_round_trip() {
        let (g, _) = Graph::from_edges(6, [(0, 5), (1, 2), (4, 3)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list_to(&g, &mut buf).unwrap();
        let back = parse_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back.graph, g);
        assert_eq!(back.duplicates, 0);
    }

    #[test]
    fn latent_round_trip_is_exact() {
        let x = LatentPositions::from_row_slice(3, 2, &[0.1, 1.0 / 3.0, 0.7, 2e-17, 0.25, 0.5]);
        let mut buf = Vec::new();
        write_latent_csv_to(&x, &mut buf).unwrap();
        let back = parse_latent_csv(buf.as_slice()).unwrap();
        assert_eq!(back.matrix(), x.matrix());
    }

    #[test]
    fn latent_ragged_rows() {
        assert!(matches!(parse_latent_csv("1,2\n3\n".as_bytes()), Err(RdpgError::Parse { line: 2, .. })));
    }
}
