//! Graph CSV files, JSON/TOML config and JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use roadsense_core::graph::{GraphError, NetworkGraph, RoadClass, RoadEdge, RoadNode};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: {message}")]
    ParseError { path: PathBuf, line: usize, message: String },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::MissingFile(path.to_path_buf())
        } else {
            IoError::Io { path: path.to_path_buf(), source }
        }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IoError::ParseError { path: path.to_path_buf(), line, message: message.into() }
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

/// Counts the `prefix0, prefix1, ...` columns that follow `fixed` leading columns.
fn trailing_width(path: &Path, headers: &csv::StringRecord, fixed: &[&str], prefix: &str) -> Result<usize, IoError> {
    for (i, name) in fixed.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(IoError::parse(path, 1, format!("column {} must be {name:?}", i + 1)));
        }
    }
    let rest = headers.len() - fixed.len().min(headers.len());
    for k in 0..rest {
        let want = format!("{prefix}{k}");
        if headers.get(fixed.len() + k) != Some(want.as_str()) {
            return Err(IoError::parse(path, 1, format!("column {} must be {want:?}", fixed.len() + k + 1)));
        }
    }
    Ok(rest)
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, record: &csv::StringRecord, i: usize) -> Result<T, IoError> {
    let raw = record.get(i).ok_or_else(|| IoError::parse(path, line, format!("missing column {}", i + 1)))?;
    raw.parse().map_err(|_| IoError::parse(path, line, format!("cannot parse {raw:?}")))
}

fn records(path: &Path, reader: &mut csv::Reader<fs::File>) -> Result<Vec<(usize, csv::StringRecord)>, IoError> {
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| IoError::parse(path, line, e.to_string()))?;
        out.push((line, rec));
    }
    Ok(out)
}

/// Reads `id,road_class,volume,f_0..` node rows and `u,v,e_0..` edge rows.
pub fn load_graph(node_path: &Path, edge_path: &Path) -> Result<NetworkGraph, IoError> {
    let mut reader = open_csv(node_path)?;
    let headers = reader.headers().map_err(|e| IoError::parse(node_path, 1, e.to_string()))?.clone();
    let d = trailing_width(node_path, &headers, &["id", "road_class", "volume"], "f_")?;
    let mut nodes = Vec::new();
    for (line, rec) in records(node_path, &mut reader)? {
        let class_raw = rec.get(1).unwrap_or_default();
        let road_class: RoadClass =
            class_raw.parse().map_err(|_| IoError::parse(node_path, line, format!("unknown road class {class_raw:?}")))?;
        let features = (0..d).map(|k| field(node_path, line, &rec, 3 + k)).collect::<Result<_, _>>()?;
        nodes.push(RoadNode {
            id: field(node_path, line, &rec, 0)?,
            road_class,
            volume: field(node_path, line, &rec, 2)?,
            features,
        });
    }
    if nodes.is_empty() {
        return Err(IoError::EmptyGraph);
    }

    let mut reader = open_csv(edge_path)?;
    let headers = reader.headers().map_err(|e| IoError::parse(edge_path, 1, e.to_string()))?.clone();
    let d_e = trailing_width(edge_path, &headers, &["u", "v"], "e_")?;
    let mut edges = Vec::new();
    for (line, rec) in records(edge_path, &mut reader)? {
        let attrs = (0..d_e).map(|k| field(edge_path, line, &rec, 2 + k)).collect::<Result<_, _>>()?;
        edges.push(RoadEdge { u: field(edge_path, line, &rec, 0)?, v: field(edge_path, line, &rec, 1)?, attrs });
    }
    Ok(NetworkGraph::with_dims(nodes, edges, Some(d), Some(d_e))?)
}

fn create(path: &Path) -> Result<fs::File, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| IoError::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |e| IoError::Format { path: path.to_path_buf(), message: e.to_string() }
}

/// Writes the two files [`load_graph`] reads. Floats use shortest
/// round-trip formatting, so loading gives back an equal graph.
pub fn save_graph(graph: &NetworkGraph, node_path: &Path, edge_path: &Path) -> Result<(), IoError> {
    if graph.node_count() == 0 {
        return Err(IoError::EmptyGraph);
    }
    let mut w = csv::Writer::from_writer(create(node_path)?);
    let mut header = vec!["id".to_string(), "road_class".into(), "volume".into()];
    header.extend((0..graph.feature_dim()).map(|k| format!("f_{k}")));
    w.write_record(&header).map_err(csv_err(node_path))?;
    for n in graph.nodes() {
        let mut row = vec![n.id.to_string(), n.road_class.as_str().to_string(), n.volume.to_string()];
        row.extend(n.features.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err(node_path))?;
    }
    w.flush().map_err(|e| IoError::io(node_path, e))?;

    let mut w = csv::Writer::from_writer(create(edge_path)?);
    let mut header = vec!["u".to_string(), "v".into()];
    header.extend((0..graph.edge_dim()).map(|k| format!("e_{k}")));
    w.write_record(&header).map_err(csv_err(edge_path))?;
    for e in graph.edges() {
        let mut row = vec![e.u.to_string(), e.v.to_string()];
        row.extend(e.attrs.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err(edge_path))?;
    }
    w.flush().map_err(|e| IoError::io(edge_path, e))
}

/// `id,score` rows, one per node.
pub fn save_scores(scores: &[f64], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["id", "score"]).map_err(csv_err(path))?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    text.push('\n');
    write_text(&text, path)
}

pub fn write_text(text: &str, path: &Path) -> Result<(), IoError> {
    use std::io::Write;
    create(path)?.write_all(text.as_bytes()).map_err(|e| IoError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::parse(path, e.line(), e.to_string()))
}

/// JSON, or TOML when the extension is `.toml`.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    if path.extension().is_some_and(|e| e == "toml") {
        let text = read_text(path)?;
        toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
            IoError::parse(path, line, e.message().to_string())
        })
    } else {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use roadsense_core::synthetic::{generate_synthetic, SyntheticConfig};

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn minimal_graph() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "id,road_class,volume,f_0\n0,local_mixed,3.5,1\n1,other,0,2\n");
        let e = write(dir.path(), "e.csv", "u,v\n0,1\n");
        let g = load_graph(&n, &e).unwrap();
        assert_eq!((g.node_count(), g.edge_count(), g.feature_dim(), g.edge_dim()), (2, 1, 1, 0));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "id,road_class,volume\n0,other,1\n1,other,2\n");
        let dangling = write(dir.path(), "e.csv", "u,v\n0,99\n");
        assert!(matches!(load_graph(&n, &dangling), Err(IoError::Graph(GraphError::DanglingEdgeEndpoint(0, 99)))));
        let dup = write(dir.path(), "d.csv", "u,v\n0,1\n1,0\n");
        assert!(matches!(load_graph(&n, &dup), Err(IoError::Graph(GraphError::DuplicateEdge(0, 1)))));
        let dup_node = write(dir.path(), "dn.csv", "id,road_class,volume\n0,other,1\n0,other,2\n");
        assert!(matches!(load_graph(&dup_node, &dup), Err(IoError::Graph(GraphError::DuplicateNodeId(0)))));
        let bad = write(dir.path(), "b.csv", "id,road_class,volume\n0,other,1\n1,other,abc\n");
        assert!(matches!(load_graph(&bad, &dup), Err(IoError::ParseError { line: 3, .. })));
        let header = write(dir.path(), "h.csv", "node,road_class,volume\n0,other,1\n");
        assert!(matches!(load_graph(&header, &dup), Err(IoError::ParseError { line: 1, .. })));
        let empty = write(dir.path(), "empty.csv", "id,road_class,volume\n");
        assert!(matches!(load_graph(&empty, &dup), Err(IoError::EmptyGraph)));
        assert!(matches!(load_graph(&dir.path().join("nope.csv"), &dup), Err(IoError::MissingFile(_))));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_synthetic(&SyntheticConfig { n_nodes: 40, ..SyntheticConfig::default() }).unwrap();
        let (n, e) = (dir.path().join("g/nodes.csv"), dir.path().join("g/edges.csv"));
        save_graph(&g, &n, &e).unwrap();
        assert_eq!(load_graph(&n, &e).unwrap(), g);
    }

    #[test]
    fn zero_width_features_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = (0..3).map(|id| RoadNode { id, road_class: RoadClass::Other, volume: 1.0, features: vec![] }).collect();
        let g = NetworkGraph::with_dims(nodes, vec![], Some(0), Some(0)).unwrap();
        let (n, e) = (dir.path().join("n.csv"), dir.path().join("e.csv"));
        save_graph(&g, &n, &e).unwrap();
        assert_eq!(read_text(&n).unwrap().lines().next(), Some("id,road_class,volume"));
        assert_eq!(load_graph(&n, &e).unwrap(), g);
    }
}
