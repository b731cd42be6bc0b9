//! SNAP-compatible edge-list text files.
//!
//! Lines starting with `#` are comments; every other non-blank line holds two
//! integer node ids separated by whitespace. Direction is ignored. A comment
//! of the form `# Nodes: N` (case-insensitive, colon optional) declares the
//! node count, which lets trailing isolated nodes survive a round trip.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// A loaded graph plus what was discarded while canonicalizing it.
#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
    /// Original id of each node when ids were compacted.
    pub original_ids: Option<Vec<u64>>,
}

fn declared_nodes(comment: &str) -> Option<usize> {
    let lower = comment.trim_start_matches('#').trim().to_ascii_lowercase();
    let rest = lower.strip_prefix("nodes")?;
    let rest = rest.trim_start().trim_start_matches(':').trim_start();
    rest.split_whitespace().next()?.parse().ok()
}

fn parse_id(tok: &str, path: &Path, line: usize) -> Result<u64> {
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let v: i128 = tok.parse().map_err(|_| err(format!("malformed node id {tok:?}")))?;
    if v < 0 {
        return Err(err(format!("negative node id {v}")));
    }
    u64::try_from(v).map_err(|_| err(format!("node id {v} too large")))
}

/// Reads an edge list. With `compact`, the distinct ids seen are renumbered
/// densely in ascending order; otherwise ids are kept and the node count is
/// one more than the largest id (or the declared count, if larger).
pub fn load_edge_list(path: &Path, compact: bool) -> Result<LoadedGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    let mut self_loops = 0;
    let mut declared = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if let Some(n) = declared_nodes(trimmed) {
                declared = declared.max(n);
            }
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected two node ids, found {} tokens", toks.len()),
            });
        }
        let u = parse_id(toks[0], path, i + 1)?;
        let v = parse_id(toks[1], path, i + 1)?;
        if u == v {
            self_loops += 1;
            continue;
        }
        pairs.push((u, v));
    }

    let (node_count, edges, original_ids) = if compact {
        let mut ids: Vec<u64> = pairs.iter().flat_map(|&(u, v)| [u, v]).collect();
        ids.sort_unstable();
        ids.dedup();
        let index = |x: u64| ids.binary_search(&x).expect("id collected above");
        let edges: Vec<(usize, usize)> = pairs.iter().map(|&(u, v)| (index(u), index(v))).collect();
        (ids.len(), edges, Some(ids))
    } else {
        let max = pairs.iter().flat_map(|&(u, v)| [u, v]).max();
        let n = max.map_or(0, |m| m as usize + 1).max(declared);
        let edges = pairs.iter().map(|&(u, v)| (u as usize, v as usize)).collect();
        (n, edges, None)
    };
    let graph = Graph::from_edges(node_count, edges)?;
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loop lines", path.display());
    }
    Ok(LoadedGraph {
        duplicate_edges: pairs.len() - graph.edge_count(),
        graph,
        self_loops_dropped: self_loops,
        original_ids,
    })
}

/// Writes one `u v` line per edge with `u < v`, after a header comment that
/// records the node and edge counts.
pub fn save_edge_list(g: &Graph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_edge_list(g, &mut w).map_err(|e| Error::io(path, e))
}

pub fn write_edge_list(g: &Graph, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# Nodes: {} Edges: {}", g.node_count(), g.edge_count())?;
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("g.txt");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_simple_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "# comment\n0 1\n1 2\n");
        let g = load_edge_list(&p, false).unwrap().graph;
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn collapses_duplicates_and_drops_self_loops() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "0 1\n1 0\n0 1\n2 2\n\n1\t2\n");
        let l = load_edge_list(&p, false).unwrap();
        assert_eq!(l.graph.edge_count(), 2);
        assert_eq!(l.self_loops_dropped, 1);
        assert_eq!(l.duplicate_edges, 2);
    }

    #[test]
    fn rejects_malformed_and_negative() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "0 1\n1 x\n");
        let err = load_edge_list(&p, false).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        let p = write(&dir, "0 -3\n");
        assert!(load_edge_list(&p, false).unwrap_err().to_string().contains("negative"));
        let p = write(&dir, "0 1 2\n");
        assert!(load_edge_list(&p, false).is_err());
        assert!(load_edge_list(&dir.path().join("missing.txt"), false).is_err());
    }

    #[test]
    fn compaction_renumbers_ascending() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "10 30\n30 20\n");
        let l = load_edge_list(&p, true).unwrap();
        assert_eq!(l.graph.node_count(), 3);
        assert_eq!(l.original_ids.unwrap(), vec![10, 20, 30]);
        assert!(l.graph.has_edge(0, 2) && l.graph.has_edge(1, 2));
    }

    #[test]
    fn save_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        let tri = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        save_edge_list(&tri, &p).unwrap();
        let body = fs::read_to_string(&p).unwrap();
        assert_eq!(body.lines().filter(|l| !l.starts_with('#')).count(), 3);

        save_edge_list(&Graph::empty(4), &p).unwrap();
        let body = fs::read_to_string(&p).unwrap();
        assert!(body.lines().all(|l| l.starts_with('#')));
        assert_eq!(load_edge_list(&p, false).unwrap().graph, Graph::empty(4));
    }

    #[test]
    fn declared_node_header() {
        assert_eq!(declared_nodes("# Nodes: 4039 Edges: 88234"), Some(4039));
        assert_eq!(declared_nodes("# nodes 7"), Some(7));
        assert_eq!(declared_nodes("# Directed graph"), None);
    }
}
