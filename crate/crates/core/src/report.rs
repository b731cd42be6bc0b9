//! Plain-text emitters for run artifacts: degree tables, DOT drawings and
//! sparse matrix dumps.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, WeightedAdjacency};
use crate::stages::{stage_degree_distribution, Stage};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn to_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// `series,degree,count` rows for the original graph followed by every
/// stage, degrees ascending within a series.
pub fn write_degree_csv(g: &Graph, stages: &[Stage], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "series,degree,count")?;
    for (d, c) in g.degree_distribution().0 {
        writeln!(w, "original,{d},{c}")?;
    }
    for s in stages {
        for (d, c) in stage_degree_distribution(s).0 {
            writeln!(w, "stage_{},{d},{c}", s.index)?;
        }
    }
    Ok(())
}

pub fn emit_degree_csv(g: &Graph, stages: &[Stage], path: &Path) -> Result<()> {
    to_file(path, |w| write_degree_csv(g, stages, w))
}

/// Undirected DOT with one line per node and per edge. Nodes are labeled
/// by `labels[u]` when given, by their index otherwise; highlighted nodes
/// (indices) are filled red.
pub fn write_dot(
    g: &Graph,
    labels: Option<&[u64]>,
    highlight: &BTreeSet<usize>,
    w: &mut impl Write,
) -> std::io::Result<()> {
    let label = |u: usize| labels.map_or(u as u64, |l| l[u]);
    writeln!(w, "graph G {{")?;
    for u in 0..g.node_count() {
        if highlight.contains(&u) {
            writeln!(w, "  {} [style=filled, fillcolor=red];", label(u))?;
        } else {
            writeln!(w, "  {};", label(u))?;
        }
    }
    for (u, v) in g.edges() {
        writeln!(w, "  {} -- {};", label(u), label(v))?;
    }
    writeln!(w, "}}")
}

pub fn emit_dot(g: &Graph, path: &Path, highlight: &BTreeSet<usize>) -> Result<()> {
    to_file(path, |w| write_dot(g, None, highlight, w))
}

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real symmetric";

/// Nonzero entries of a symmetric matrix as 1-based `row col weight`
/// triplets, lower triangle only.
pub fn write_matrix_market(m: &WeightedAdjacency, w: &mut impl Write) -> std::io::Result<()> {
    let entries: Vec<(usize, usize, f64)> = m.nonzero_upper().collect();
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{0} {0} {1}", m.size(), entries.len())?;
    for (u, v, x) in entries {
        writeln!(w, "{} {} {x}", v + 1, u + 1)?;
    }
    Ok(())
}

pub fn save_matrix_market(m: &WeightedAdjacency, path: &Path) -> Result<()> {
    to_file(path, |w| write_matrix_market(m, w))
}

pub fn load_matrix_market(path: &Path) -> Result<WeightedAdjacency> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut m: Option<WeightedAdjacency> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(i + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        match &mut m {
            None => {
                let rows: usize = fields[0].parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
                if fields[1] != fields[0] {
                    return Err(parse_err(i + 1, "matrix is not square".into()));
                }
                m = Some(WeightedAdjacency::zeros(rows));
            }
            Some(m) => {
                let idx = |s: &str| -> Result<usize> {
                    let x: usize = s.parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
                    if x == 0 || x > m.size() {
                        return Err(parse_err(i + 1, format!("index {x} out of range")));
                    }
                    Ok(x - 1)
                };
                let (r, c) = (idx(fields[0])?, idx(fields[1])?);
                if r == c {
                    return Err(parse_err(i + 1, "diagonal entry".into()));
                }
                let x: f64 = fields[2].parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
                m.set_symmetric(r, c, x);
            }
        }
    }
    m.ok_or_else(|| parse_err(0, "missing size line".into()))
}

/// `stage,cut_value,edge_count,deleted_edge_pct` rows.
pub fn write_stages_csv(stages: &[Stage], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "stage,cut_value,edge_count,deleted_edge_pct")?;
    for s in stages {
        writeln!(
            w,
            "{},{},{},{}",
            s.index,
            s.cut_value,
            s.edge_count(),
            s.deleted_edge_pct
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn render<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn triangle_degree_csv() {
        let s = render(|w| write_degree_csv(&triangle(), &[], w));
        assert_eq!(s, "series,degree,count\noriginal,2,3\n");
    }

    #[test]
    fn dot_lines() {
        let s = render(|w| write_dot(&triangle(), None, &BTreeSet::from([1]), w));
        assert_eq!(s.lines().filter(|l| l.contains("--")).count(), 3);
        assert!(s.contains("  1 [style=filled, fillcolor=red];"));
        assert!(s.contains("  0 -- 1;"));
        let empty = render(|w| write_dot(&Graph::empty(0), None, &BTreeSet::new(), w));
        assert_eq!(empty, "graph G {\n}\n");
        let labeled = render(|w| write_dot(&triangle(), Some(&[10, 20, 30]), &BTreeSet::new(), w));
        assert!(labeled.contains("  20 -- 30;"));
    }

    #[test]
    fn matrix_market_round_trip() {
        let mut m = WeightedAdjacency::zeros(4);
        m.set_symmetric(0, 3, 0.125);
        m.set_symmetric(1, 2, -1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        save_matrix_market(&m, &path).unwrap();
        assert_eq!(load_matrix_market(&path).unwrap(), m);
        std::fs::write(&path, "%%MatrixMarket\n2 2 1\n1 1 0.5\n").unwrap();
        assert!(load_matrix_market(&path).is_err());
    }
}
