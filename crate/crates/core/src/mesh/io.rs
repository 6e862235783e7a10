//! Text mesh format.
//!
//! ```text
//! TSMESH 1
//! nodes N vertex_nodes V tets T
//! x y z                 (N lines)
//! n0 .. n9 material     (T lines, 0-based ids)
//! ```
//!
//! Coordinates are written in shortest round-trip form, so reading back a
//! written mesh reproduces it bit-exactly. Constrained dofs go in a sidecar
//! file of `node axis` lines.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{DirichletSet, Mesh, MeshError, Point};
use crate::io::write_atomic;

const MAGIC: &str = "TSMESH 1";

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    write_atomic(path, |w| {
        writeln!(w, "{MAGIC}")?;
        writeln!(
            w,
            "nodes {} vertex_nodes {} tets {}",
            mesh.node_count(),
            mesh.vertex_count(),
            mesh.element_count()
        )?;
        for p in mesh.coords() {
            writeln!(w, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
        }
        for (t, m) in mesh.tets10().iter().zip(mesh.material_ids()) {
            for id in t {
                write!(w, "{id} ")?;
            }
            writeln!(w, "{m}")?;
        }
        Ok(())
    })?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self, what: &str) -> Result<String, MeshError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(MeshError::Parse {
                line: self.line,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn err(&self, msg: impl Into<String>) -> MeshError {
        MeshError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines<impl BufRead>, tok: Option<&str>, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| lines.err(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| lines.err(format!("cannot parse {what} from '{tok}'")))
}

pub fn read_mesh(path: &Path) -> Result<Mesh, MeshError> {
    let file = std::fs::File::open(path)?;
    let mut lines = Lines {
        inner: BufReader::new(file).lines(),
        line: 0,
    };
    let head = lines.next_line("header")?;
    if head.trim() != MAGIC {
        return Err(lines.err(format!("expected '{MAGIC}', found '{}'", head.trim())));
    }
    let counts = lines.next_line("counts line")?;
    let toks: Vec<&str> = counts.split_whitespace().collect();
    if toks.len() != 6 || toks[0] != "nodes" || toks[2] != "vertex_nodes" || toks[4] != "tets" {
        return Err(lines.err("expected 'nodes N vertex_nodes V tets T'"));
    }
    let n: usize = parse_num(&lines, Some(toks[1]), "node count")?;
    let v: usize = parse_num(&lines, Some(toks[3]), "vertex count")?;
    let t: usize = parse_num(&lines, Some(toks[5]), "tet count")?;

    let mut coords: Vec<Point> = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.next_line("node coordinates")?;
        let mut it = l.split_whitespace();
        let p = [
            parse_num(&lines, it.next(), "x")?,
            parse_num(&lines, it.next(), "y")?,
            parse_num(&lines, it.next(), "z")?,
        ];
        if it.next().is_some() {
            return Err(lines.err("trailing data after coordinates"));
        }
        coords.push(p);
    }
    let mut tets = Vec::with_capacity(t);
    let mut mats = Vec::with_capacity(t);
    for _ in 0..t {
        let l = lines.next_line("element record")?;
        let mut it = l.split_whitespace();
        let mut ids = [0u32; 10];
        for id in ids.iter_mut() {
            *id = parse_num(&lines, it.next(), "node id")?;
        }
        mats.push(parse_num(&lines, it.next(), "material id")?);
        if it.next().is_some() {
            return Err(lines.err("trailing data after element record"));
        }
        tets.push(ids);
    }
    Mesh::new(coords, tets, mats, v)
}

pub fn write_dirichlet(set: &DirichletSet, path: &Path) -> Result<(), MeshError> {
    write_atomic(path, |w| {
        for (n, a) in set.iter() {
            writeln!(w, "{n} {a}")?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn read_dirichlet(path: &Path) -> Result<DirichletSet, MeshError> {
    let file = std::fs::File::open(path)?;
    let mut set = DirichletSet::new();
    for (i, l) in BufReader::new(file).lines().enumerate() {
        let l = l?;
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let bad = || MeshError::Parse {
            line: i + 1,
            msg: format!("expected 'node axis', found '{l}'"),
        };
        let mut it = l.split_whitespace();
        let n: u32 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let a: u8 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if a > 2 || it.next().is_some() {
            return Err(bad());
        }
        set.insert(n, a);
    }
    Ok(set)
}
