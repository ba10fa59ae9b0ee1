//! Graph container format (`.lkg`).
//!
//! A saved graph is a single self-describing binary file:
//!
//! ```text
//! offset  size  content
//! ------  ----  -------------------------------------------------------
//! 0       4     magic bytes "LKG1"
//! 4       4     u32 LE: header length H
//! 8       H     UTF-8 JSON header (see below)
//! 8+H     ...   body: the four sections, back to back
//! ```
//!
//! Header JSON:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "node_count": N, "edge_count": E,
//!   "instance_count": M, "discipline_count": D,
//!   "section_len": {"labels": .., "adjacency": .., "phi": .., "instances": ..},
//!   "body_sha256": "<hex digest of the whole body>"
//! }
//! ```
//!
//! Body sections (all integers little-endian):
//!
//! * **labels** — per node: `u32` byte length, then UTF-8 label bytes.
//!   Nodes are stored in label-sorted order; position = node id.
//! * **adjacency** — `(N+1) × u64` CSR offsets, then `2E × u32` neighbor
//!   ids, then `2E × u32` weights (parallel to the neighbor array).
//! * **phi** — `(N+1) × u64` CSR offsets, then `u32` instance positions.
//! * **instances** — `u16` discipline count, per discipline a
//!   (`u32` length, bytes) string; then per instance: (`u32` length,
//!   bytes) id, `u16` discipline index, `u8` difficulty.
//!
//! `load_graph` rejects wrong magic, unsupported versions, truncated
//! sections, and checksum mismatches with [`GraphError::CorruptFile`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::{GraphError, InstanceMeta, KpGraph};

const MAGIC: &[u8; 4] = b"LKG1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    node_count: u64,
    edge_count: u64,
    instance_count: u64,
    discipline_count: u64,
    section_len: SectionLengths,
    body_sha256: String,
}

#[derive(Serialize, Deserialize)]
struct SectionLengths {
    labels: u64,
    adjacency: u64,
    phi: u64,
    instances: u64,
}

pub fn save_graph(graph: &KpGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let (labels, adj_offsets, adj_neighbors, adj_weights, phi_offsets, phi_instances, instances, disciplines) =
        graph.parts();

    let mut labels_sec = Vec::new();
    for label in labels {
        write_str(&mut labels_sec, label);
    }

    let mut adj_sec = Vec::new();
    for &off in adj_offsets {
        adj_sec.extend_from_slice(&off.to_le_bytes());
    }
    for &v in adj_neighbors {
        adj_sec.extend_from_slice(&v.to_le_bytes());
    }
    for &w in adj_weights {
        adj_sec.extend_from_slice(&w.to_le_bytes());
    }

    let mut phi_sec = Vec::new();
    for &off in phi_offsets {
        phi_sec.extend_from_slice(&off.to_le_bytes());
    }
    for &i in phi_instances {
        phi_sec.extend_from_slice(&i.to_le_bytes());
    }

    let mut inst_sec = Vec::new();
    inst_sec.extend_from_slice(&(disciplines.len() as u16).to_le_bytes());
    for d in disciplines {
        write_str(&mut inst_sec, d);
    }
    for m in instances {
        write_str(&mut inst_sec, &m.id);
        inst_sec.extend_from_slice(&m.discipline.to_le_bytes());
        inst_sec.push(m.difficulty);
    }

    let mut body = Vec::with_capacity(
        labels_sec.len() + adj_sec.len() + phi_sec.len() + inst_sec.len(),
    );
    body.extend_from_slice(&labels_sec);
    body.extend_from_slice(&adj_sec);
    body.extend_from_slice(&phi_sec);
    body.extend_from_slice(&inst_sec);

    let header = Header {
        format_version: FORMAT_VERSION,
        node_count: labels.len() as u64,
        edge_count: (adj_neighbors.len() / 2) as u64,
        instance_count: instances.len() as u64,
        discipline_count: disciplines.len() as u64,
        section_len: SectionLengths {
            labels: labels_sec.len() as u64,
            adjacency: adj_sec.len() as u64,
            phi: phi_sec.len() as u64,
            instances: inst_sec.len() as u64,
        },
        body_sha256: hex(&Sha256::digest(&body)),
    };
    let header_json = serde_json::to_vec(&header).expect("header serialization cannot fail");

    let mut out = Vec::with_capacity(8 + header_json.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&body);
    fs::write(path, out)?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<KpGraph, GraphError> {
    let bytes = fs::read(path)?;
    parse_graph(&bytes)
}

fn parse_graph(bytes: &[u8]) -> Result<KpGraph, GraphError> {
    let corrupt = |msg: &str| GraphError::CorruptFile(msg.to_string());

    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(corrupt("missing LKG1 magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header overruns file"))?;
    let header: Header = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| corrupt(&format!("bad header json: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(corrupt(&format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let body = &bytes[header_end..];
    let expect_len = header.section_len.labels
        + header.section_len.adjacency
        + header.section_len.phi
        + header.section_len.instances;
    if body.len() as u64 != expect_len {
        return Err(corrupt(&format!(
            "body is {} bytes, header promises {expect_len}",
            body.len()
        )));
    }
    if hex(&Sha256::digest(body)) != header.body_sha256 {
        return Err(corrupt("body checksum mismatch"));
    }

    let n = header.node_count as usize;
    let mut r = Reader { buf: body, pos: 0 };

    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.read_str()?);
    }

    let mut adj_offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        adj_offsets.push(r.read_u64()?);
    }
    let slots = *adj_offsets.last().unwrap_or(&0) as usize;
    if slots != header.edge_count as usize * 2 {
        return Err(corrupt("adjacency offsets disagree with edge count"));
    }
    let mut adj_neighbors = Vec::with_capacity(slots);
    for _ in 0..slots {
        adj_neighbors.push(r.read_u32()?);
    }
    let mut adj_weights = Vec::with_capacity(slots);
    for _ in 0..slots {
        adj_weights.push(r.read_u32()?);
    }

    let mut phi_offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        phi_offsets.push(r.read_u64()?);
    }
    let postings = *phi_offsets.last().unwrap_or(&0) as usize;
    let mut phi_instances = Vec::with_capacity(postings);
    for _ in 0..postings {
        phi_instances.push(r.read_u32()?);
    }

    let discipline_count = r.read_u16()? as usize;
    if discipline_count != header.discipline_count as usize {
        return Err(corrupt("discipline table disagrees with header"));
    }
    let mut disciplines = Vec::with_capacity(discipline_count);
    for _ in 0..discipline_count {
        disciplines.push(r.read_str()?);
    }
    let mut instances = Vec::with_capacity(header.instance_count as usize);
    for _ in 0..header.instance_count {
        let id = r.read_str()?;
        let discipline = r.read_u16()?;
        let difficulty = r.read_u8()?;
        instances.push(InstanceMeta { id, discipline, difficulty });
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after instance table"));
    }

    Ok(KpGraph::from_parts(
        labels,
        adj_offsets,
        adj_neighbors,
        adj_weights,
        phi_offsets,
        phi_instances,
        instances,
        disciplines,
    ))
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8], GraphError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| GraphError::CorruptFile("unexpected end of file".into()))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn read_u8(&mut self) -> Result<u8, GraphError> {
        Ok(self.take(1)?[0])
    }

    fn read_u16(&mut self) -> Result<u16, GraphError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn read_u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_u64(&mut self) -> Result<u64, GraphError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_str(&mut self) -> Result<String, GraphError> {
        let len = self.read_u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| GraphError::CorruptFile("invalid utf-8 in string table".into()))
    }
}
