//! On-disk formats: line-oriented node/edge records, the graph snapshot,
//! binary vector tables, relation weights and JSON-lines helpers.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hetgcot_core::fastgtn::{RelationWeightReport, RelationWeightVector, MIX_SLOTS};
use hetgcot_core::graph::{GraphError, NodeAttrs, PaperAttrs};
use hetgcot_core::math::Matrix;
use hetgcot_core::{EdgeKind, EdgeRecord, HetGraph, NodeId, NodeKind, NodeRecord, NodeTable};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// One node line. Field names follow the dataset templates; attributes that
/// do not apply to the node's type must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeLine {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cited_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwci: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<Vec<String>>,
    #[serde(default, rename = "abstract", skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organization: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeLine {
    pub src: String,
    pub dst: String,
    #[serde(rename = "type")]
    pub kind: String,
}

impl NodeLine {
    pub fn into_record(self) -> Result<NodeRecord> {
        let id = NodeId::new(self.id).map_err(|e| anyhow!(e))?;
        let kind = NodeKind::parse(&self.kind).ok_or_else(|| anyhow!("unknown node type {:?}", self.kind))?;
        let paper_only = [
            ("title", self.title.is_some()),
            ("year", self.year.is_some()),
            ("cited_count", self.cited_count.is_some()),
            ("fwci", self.fwci.is_some()),
            ("keywords", self.keywords.is_some()),
            ("abstract", self.abstract_text.is_some()),
        ];
        let check = |allowed: &[&str], fields: &[(&str, bool)]| -> Result<()> {
            match fields.iter().find(|(f, set)| *set && !allowed.contains(f)) {
                Some((f, _)) => bail!("{kind} node {id} has field {f:?}"),
                None => Ok(()),
            }
        };
        let author_or_venue = [("name", self.name.is_some()), ("organization", self.organization.is_some())];
        let attrs = match kind {
            NodeKind::Paper => {
                check(&[], &author_or_venue)?;
                if let Some(y) = self.year {
                    if !(1000..=9999).contains(&y) {
                        bail!("paper {id} has year {y}, expected four digits");
                    }
                }
                if let Some(f) = self.fwci {
                    if !f.is_finite() {
                        bail!("paper {id} has non-finite fwci");
                    }
                }
                NodeAttrs::Paper(PaperAttrs {
                    title: self.title.unwrap_or_default(),
                    year: self.year,
                    cited_count: self.cited_count.unwrap_or(0),
                    fwci: self.fwci,
                    keywords: self.keywords.unwrap_or_default(),
                    abstract_text: self.abstract_text.unwrap_or_default(),
                })
            }
            NodeKind::Author => {
                check(&[], &paper_only)?;
                NodeAttrs::Author {
                    name: self.name.unwrap_or_default(),
                    organization: self.organization.unwrap_or_default(),
                }
            }
            NodeKind::Venue => {
                check(&[], &paper_only)?;
                check(&["name"], &author_or_venue)?;
                NodeAttrs::Venue {
                    name: self.name.unwrap_or_default(),
                }
            }
        };
        Ok(NodeRecord { id, attrs })
    }

    pub fn from_record(r: &NodeRecord) -> Self {
        let mut line = NodeLine {
            id: r.id.as_str().to_string(),
            kind: r.kind().as_str().to_string(),
            title: None,
            year: None,
            cited_count: None,
            fwci: None,
            keywords: None,
            abstract_text: None,
            name: None,
            organization: None,
        };
        match &r.attrs {
            NodeAttrs::Paper(p) => {
                line.title = Some(p.title.clone());
                line.year = p.year;
                line.cited_count = Some(p.cited_count);
                line.fwci = p.fwci;
                line.keywords = Some(p.keywords.clone());
                line.abstract_text = Some(p.abstract_text.clone());
            }
            NodeAttrs::Author { name, organization } => {
                line.name = Some(name.clone());
                line.organization = Some(organization.clone());
            }
            NodeAttrs::Venue { name } => line.name = Some(name.clone()),
        }
        line
    }
}

impl EdgeLine {
    pub fn into_record(self) -> Result<EdgeRecord> {
        let kind = EdgeKind::parse(&self.kind).ok_or_else(|| anyhow!("unknown edge type {:?}", self.kind))?;
        Ok(EdgeRecord {
            src: NodeId::new(self.src).map_err(|e| anyhow!(e))?,
            dst: NodeId::new(self.dst).map_err(|e| anyhow!(e))?,
            kind,
        })
    }

    pub fn from_record(e: &EdgeRecord) -> Self {
        Self {
            src: e.src.as_str().to_string(),
            dst: e.dst.as_str().to_string(),
            kind: e.kind.as_str().to_string(),
        }
    }
}

/// A line that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedLine {
    pub file: String,
    pub line: usize,
    pub reason: String,
}

/// Records read from a file, each paired with its 1-based line number.
/// Blank lines are skipped.
fn read_records<T, F>(path: &Path, lenient: bool, parse: F) -> Result<(Vec<(usize, T)>, Vec<RejectedLine>)>
where
    F: Fn(&str) -> Result<T>,
{
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}: cannot read line {}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse(&line) {
            Ok(r) => out.push((i + 1, r)),
            Err(e) if lenient => rejected.push(RejectedLine {
                file: path.display().to_string(),
                line: i + 1,
                reason: format!("{e:#}"),
            }),
            Err(e) => bail!("{}: line {}: {e:#}", path.display(), i + 1),
        }
    }
    Ok((out, rejected))
}

fn parse_node(line: &str) -> Result<NodeRecord> {
    serde_json::from_str::<NodeLine>(line)?.into_record()
}

fn parse_edge(line: &str) -> Result<EdgeRecord> {
    serde_json::from_str::<EdgeLine>(line)?.into_record()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub graph: HetGraph,
    pub rejected: Vec<RejectedLine>,
}

/// Reads node and edge files into a validated graph.
///
/// Strict mode stops at the first bad line or record. Lenient mode drops bad
/// lines, duplicate nodes and invalid edges and reports each with its line;
/// papers without exactly one venue edge are an error in both modes.
pub fn ingest(nodes: &Path, edges: &Path, lenient: bool) -> Result<Ingested> {
    let (node_lines, mut rejected) = read_records(nodes, lenient, parse_node)?;
    let (edge_lines, edge_rejected) = read_records(edges, lenient, parse_edge)?;
    rejected.extend(edge_rejected);
    let node_at: Vec<usize> = node_lines.iter().map(|(l, _)| *l).collect();
    let edge_at: Vec<usize> = edge_lines.iter().map(|(l, _)| *l).collect();
    let node_records = node_lines.into_iter().map(|(_, r)| r).collect();
    let edge_records = edge_lines.into_iter().map(|(_, r)| r).collect();
    let locate = |e: &GraphError| -> Option<(&Path, usize)> {
        match e {
            GraphError::DuplicateNode { position, .. } => Some((nodes, node_at[*position])),
            GraphError::DanglingEndpoint { position, .. }
            | GraphError::KindMismatch { position, .. }
            | GraphError::DuplicateEdge { position, .. } => Some((edges, edge_at[*position])),
            _ => None,
        }
    };
    if lenient {
        let (graph, rejections) = HetGraph::build_lenient(node_records, edge_records)?;
        for r in rejections {
            let (file, line) = locate(&r.error).unwrap_or((edges, 0));
            rejected.push(RejectedLine {
                file: file.display().to_string(),
                line,
                reason: r.error.to_string(),
            });
        }
        Ok(Ingested { graph, rejected })
    } else {
        match HetGraph::build(node_records, edge_records) {
            Ok(graph) => Ok(Ingested { graph, rejected }),
            Err(e) => match locate(&e) {
                Some((file, line)) => bail!("{}: line {line}: {e}", file.display()),
                None => Err(e.into()),
            },
        }
    }
}

pub fn write_node_lines<W: Write>(g: &HetGraph, mut w: W) -> Result<()> {
    for n in g.nodes() {
        serde_json::to_writer(&mut w, &NodeLine::from_record(n))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_edge_lines<W: Write>(g: &HetGraph, mut w: W) -> Result<()> {
    for e in g.edges() {
        serde_json::to_writer(&mut w, &EdgeLine::from_record(e))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

const GRAPH_MAGIC: &str = "#hetgcot-graph";
const GRAPH_VERSION: u32 = 1;

/// Snapshot: a header line `#hetgcot-graph 1 <nodes> <edges>`, then one node
/// line per node and one edge line per edge, in the graph's sorted order.
pub fn write_graph(g: &HetGraph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "{GRAPH_MAGIC} {GRAPH_VERSION} {} {}", g.node_count(), g.edge_count())?;
    write_node_lines(g, &mut w)?;
    write_edge_lines(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<HetGraph> {
    let file = File::open(path).with_context(|| format!("graph snapshot not found: {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (n_nodes, n_edges) = match parts.as_slice() {
        [magic, version, n, e] if *magic == GRAPH_MAGIC => {
            if version.parse::<u32>().ok() != Some(GRAPH_VERSION) {
                bail!("{}: unsupported snapshot version {version}", path.display());
            }
            (n.parse::<usize>()?, e.parse::<usize>()?)
        }
        _ => bail!("{}: not a graph snapshot", path.display()),
    };
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut edges = Vec::with_capacity(n_edges);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let at = || format!("{}: line {}", path.display(), i + 2);
        if i < n_nodes {
            nodes.push(parse_node(&line).with_context(at)?);
        } else if i < n_nodes + n_edges {
            edges.push(parse_edge(&line).with_context(at)?);
        } else if !line.trim().is_empty() {
            bail!("{}: trailing data", at());
        }
    }
    if nodes.len() != n_nodes || edges.len() != n_edges {
        bail!("{}: truncated snapshot", path.display());
    }
    Ok(HetGraph::build(nodes, edges)?)
}

const TABLE_MAGIC: &[u8; 4] = b"HGFT";
const TABLE_VERSION: u32 = 1;

/// Vector table: `HGFT`, then u32 version, dim and count, then per row a u32
/// id length, the UTF-8 id and `dim` f32 values. All integers and floats are
/// little-endian.
pub fn write_table(t: &NodeTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    w.write_all(TABLE_MAGIC)?;
    for v in [TABLE_VERSION, to_u32(t.dim())?, to_u32(t.len())?] {
        w.write_all(&v.to_le_bytes())?;
    }
    for (id, row) in t.iter() {
        let bytes = id.as_str().as_bytes();
        w.write_all(&to_u32(bytes.len())?.to_le_bytes())?;
        w.write_all(bytes)?;
        for &x in row {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| anyhow!("value {n} does not fit the table header"))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_table(path: &Path) -> Result<NodeTable> {
    let file = File::open(path).with_context(|| format!("table not found: {}", path.display()))?;
    let mut r = BufReader::new(file);
    let ctx = || format!("{}: malformed vector table", path.display());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).with_context(ctx)?;
    if &magic != TABLE_MAGIC {
        bail!("{}: not a vector table", path.display());
    }
    let version = read_u32(&mut r).with_context(ctx)?;
    if version != TABLE_VERSION {
        bail!("{}: unsupported table version {version}", path.display());
    }
    let dim = read_u32(&mut r).with_context(ctx)? as usize;
    let count = read_u32(&mut r).with_context(ctx)? as usize;
    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let len = read_u32(&mut r).with_context(ctx)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).with_context(ctx)?;
        let id = String::from_utf8(buf).with_context(ctx)?;
        ids.push(NodeId::new(id).map_err(|e| anyhow!(e)).with_context(ctx)?);
        for _ in 0..dim {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).with_context(ctx)?;
            data.push(f64::from(f32::from_le_bytes(b)));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        bail!("{}: trailing bytes after {count} rows", path.display());
    }
    Ok(NodeTable::new(ids, Matrix::from_vec(count, dim, data))?)
}

/// The table as it reads back from disk, so in-memory runs see the same
/// f32-rounded values as runs that load the file.
pub fn quantize(t: &NodeTable) -> NodeTable {
    let data: Vec<f64> = t.matrix().as_slice().iter().map(|&x| f64::from(x as f32)).collect();
    NodeTable::new(t.ids().to_vec(), Matrix::from_vec(t.len(), t.dim(), data)).expect("same shape as the source table")
}

fn weight_map(w: &RelationWeightVector) -> Value {
    let mut m = Map::new();
    for (k, v) in w.iter() {
        m.insert(k.key().to_string(), json!(v));
    }
    Value::Object(m)
}

/// `weights.json`: the edge-kind weights plus every (layer, channel)
/// distribution for audit. `extra` is merged in at the top level.
pub fn weights_json(report: &RelationWeightReport, channels: usize, extra: Value) -> Value {
    let rows: Vec<Value> = report
        .per_layer_channel
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "layer": i / channels.max(1),
                "channel": i % channels.max(1),
                "paper_venue": r[0],
                "paper_author": r[1],
                "self_loop": r[MIX_SLOTS - 1],
            })
        })
        .collect();
    let mut out = json!({
        "weights": weight_map(&report.weights),
        "per_layer_channel": rows,
    });
    if let (Value::Object(o), Value::Object(e)) = (&mut out, extra) {
        o.extend(e);
    }
    out
}

pub fn read_weights(path: &Path) -> Result<RelationWeightVector> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("fastgtn weights not found: {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))?;
    let map = v
        .get("weights")
        .and_then(Value::as_object)
        .ok_or_else(|| anyhow!("{}: missing \"weights\" object", path.display()))?;
    let mut w = [0.0; 2];
    for kind in EdgeKind::ALL {
        let x = map
            .get(kind.key())
            .and_then(Value::as_f64)
            .ok_or_else(|| anyhow!("{}: missing weight for {}", path.display(), kind.key()))?;
        if !(x.is_finite() && x >= 0.0) {
            bail!("{}: weight for {} must be finite and nonnegative", path.display(), kind.key());
        }
        w[kind.index()] = x;
    }
    if w[0] + w[1] <= 0.0 {
        bail!("{}: weights sum to zero", path.display());
    }
    Ok(RelationWeightVector::new(w[0], w[1]))
}

pub fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?);
    }
    Ok(out)
}
