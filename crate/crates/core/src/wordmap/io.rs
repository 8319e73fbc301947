//! Word vector and orthogonal-map file formats.
//!
//! Vectors: text lines "word v1 .. vd" with a "count" column kept in a
//! parallel header so tables round-trip. Maps: binary, magic "ORTH",
//! u32 dim, then dim x dim f32 little-endian row-major.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::wordmap::align::OrthogonalMap;
use crate::wordmap::vectors::WordVecTable;

pub const MAP_MAGIC: &[u8; 4] = b"ORTH";

pub fn write_word_vectors(path: &Path, table: &WordVecTable) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", table.len(), table.dim()));
    for i in 0..table.len() {
        out.push_str(&table.words[i]);
        out.push_str(&format!(" {}", table.counts[i]));
        for v in table.vector(i) {
            out.push_str(&format!(" {}", ryu_like(*v)));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// f32 formatting that survives parse -> format round trips: the shortest
/// representation Rust prints for the exact value.
fn ryu_like(v: f32) -> String {
    format!("{}", v)
}

pub fn read_word_vectors(path: &Path) -> Result<WordVecTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("empty word vector file"))?;
    let mut parts = header.split_whitespace();
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("bad word count in header"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("bad dim in header"))?;
    let mut words = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut matrix = Array2::<f32>::zeros((n, dim));
    for i in 0..n {
        let line = lines.next().ok_or_else(|| Error::format("truncated word vector file"))?;
        let mut parts = line.split_whitespace();
        let word = parts.next().ok_or_else(|| Error::format("missing word"))?;
        let count: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("missing count"))?;
        words.push(word.to_string());
        counts.push(count);
        for j in 0..dim {
            matrix[[i, j]] = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(format!("bad vector value at row {}", i)))?;
        }
    }
    WordVecTable::new(words, matrix, counts)
}

pub fn write_map(path: &Path, map: &OrthogonalMap) -> Result<()> {
    let d = map.dim();
    let mut buf = Vec::with_capacity(8 + d * d * 4);
    buf.extend_from_slice(MAP_MAGIC);
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for v in map.w.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<OrthogonalMap> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != MAP_MAGIC {
        return Err(Error::format("not an ORTH map file"));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + d * d * 4 {
        return Err(Error::format("map payload does not match its dim header"));
    }
    let mut w = Array2::<f64>::zeros((d, d));
    for (i, chunk) in bytes[8..].chunks_exact(4).enumerate() {
        w[[i / d, i % d]] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok(OrthogonalMap { w, degenerate: false })
}
