//! File plumbing: atomic writes and the binary solution format.
//!
//! A solution file is an 8-line text header followed by raw little-endian
//! 64-bit values in batch-innermost order:
//!
//! ```text
//! TSSOL 1
//! nodes N
//! dofs_per_node 3
//! batch B
//! precision f64
//! endianness little
//! layout node-axis-batch
//! data
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::batch::VectorBatch64;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes through a temporary file in the destination directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic<F>(path: &Path, body: F) -> std::io::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => std::fs::rename(&tmp, path),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

const SOLUTION_MAGIC: &str = "TSSOL 1";

pub fn write_solution(path: &Path, u: &VectorBatch64) -> Result<(), FormatError> {
    write_atomic(path, |w| {
        writeln!(w, "{SOLUTION_MAGIC}")?;
        writeln!(w, "nodes {}", u.n_nodes())?;
        writeln!(w, "dofs_per_node 3")?;
        writeln!(w, "batch {}", u.batch())?;
        writeln!(w, "precision f64")?;
        writeln!(w, "endianness little")?;
        writeln!(w, "layout node-axis-batch")?;
        writeln!(w, "data")?;
        for v in u.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn read_solution(path: &Path) -> Result<VectorBatch64, FormatError> {
    let invalid = |msg: String| FormatError::Invalid {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::with_capacity(8);
    for _ in 0..8 {
        let mut l = String::new();
        if r.read_line(&mut l)? == 0 {
            return Err(invalid("truncated header".into()));
        }
        header.push(l.trim_end().to_string());
    }
    let field = |i: usize, key: &str| -> Result<String, FormatError> {
        header[i]
            .strip_prefix(key)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| invalid(format!("header line {} should start with '{key}'", i + 1)))
    };
    if header[0] != SOLUTION_MAGIC {
        return Err(invalid(format!("bad magic '{}'", header[0])));
    }
    let nodes: usize = field(1, "nodes")?
        .parse()
        .map_err(|_| invalid("bad node count".into()))?;
    let batch: usize = field(3, "batch")?
        .parse()
        .map_err(|_| invalid("bad batch width".into()))?;
    if field(2, "dofs_per_node")? != "3"
        || field(4, "precision")? != "f64"
        || field(5, "endianness")? != "little"
        || header[7] != "data"
        || batch == 0
    {
        return Err(invalid("unsupported header".into()));
    }
    let len = 3 * nodes * batch;
    let mut bytes = Vec::with_capacity(len * 8);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(invalid(format!(
            "expected {} data bytes, found {}",
            len * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(VectorBatch64::from_raw(nodes, batch, data))
}

/// Legacy-VTK unstructured grid with a point displacement field, for plotting.
pub fn write_vtk(path: &Path, mesh: &crate::mesh::Mesh, u: &VectorBatch64, column: usize) -> std::io::Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "displacement column {column}")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", mesh.node_count())?;
        for p in mesh.coords() {
            writeln!(w, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
        }
        let ne = mesh.element_count();
        writeln!(w, "CELLS {ne} {}", ne * 11)?;
        for t in mesh.tets10() {
            write!(w, "10")?;
            for id in t {
                write!(w, " {id}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "CELL_TYPES {ne}")?;
        for _ in 0..ne {
            // VTK_QUADRATIC_TETRA
            writeln!(w, "24")?;
        }
        writeln!(w, "POINT_DATA {}", mesh.node_count())?;
        writeln!(w, "VECTORS displacement double")?;
        for n in 0..mesh.node_count() {
            writeln!(
                w,
                "{:?} {:?} {:?}",
                u.get(n, 0, column),
                u.get(n, 1, column),
                u.get(n, 2, column)
            )?;
        }
        Ok(())
    })
}
