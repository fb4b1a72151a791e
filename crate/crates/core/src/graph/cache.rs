//! Binary graph cache.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    "SATG"
//! version  u16
//! n        u64
//! k        u32
//! nnz      u64
//! offsets  u64 x (n + 1)
//! targets  u32 x nnz
//! weights  f64 x nnz
//! ```
//!
//! Only the directed neighbour rows are stored; the symmetrized affinity and
//! degrees are rebuilt on load, which reproduces the original graph exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::Graph;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SATG";
pub const VERSION: u16 = 1;

pub fn write_graph<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_u16::<LittleEndian>(VERSION)?;
    out.write_u64::<LittleEndian>(graph.n() as u64)?;
    out.write_u32::<LittleEndian>(graph.k() as u32)?;
    out.write_u64::<LittleEndian>(graph.num_directed_edges() as u64)?;
    for &p in graph.row_ptr() {
        out.write_u64::<LittleEndian>(p as u64)?;
    }
    for &id in graph.row_ids() {
        out.write_u32::<LittleEndian>(id as u32)?;
    }
    for &w in graph.row_weights() {
        out.write_f64::<LittleEndian>(w)?;
    }
    out.flush()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("graph cache is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_graph<R: Read>(mut input: R) -> Result<Graph> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad graph cache magic {magic:?}")));
    }
    let version = input.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported graph cache version {version}")));
    }
    let n = input.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let k = input.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let nnz = input.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    if k == 0 || nnz > n.saturating_mul(k) {
        return Err(Error::Format(format!("inconsistent header: n = {n}, k = {k}, nnz = {nnz}")));
    }
    let mut offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        offsets.push(input.read_u64::<LittleEndian>().map_err(truncated)? as usize);
    }
    if offsets[0] != 0 || offsets[n] != nnz || offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Format("graph cache offsets are not monotone".into()));
    }
    let mut targets = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        targets.push(input.read_u32::<LittleEndian>().map_err(truncated)? as usize);
    }
    let mut weights = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        weights.push(input.read_f64::<LittleEndian>().map_err(truncated)?);
    }
    let rows = (0..n)
        .map(|x| {
            (offsets[x]..offsets[x + 1])
                .map(|p| (targets[p], weights[p]))
                .collect()
        })
        .collect();
    Graph::from_rows(n, k, rows).map_err(|e| Error::Format(format!("invalid cached graph: {e}")))
}

pub fn save(graph: &Graph, path: &Path) -> Result<()> {
    write_graph(graph, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<Graph> {
    read_graph(BufReader::new(File::open(path)?))
}
