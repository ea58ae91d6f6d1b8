//! Plain-text mesh format (`v x y`, `t i j k`, `e i j tag`) and solution CSV.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::solver::mesh::{BoundaryTag, Mesh};
use crate::solver::solution::SolutionField;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: line,
        message: message.into(),
    }
}

pub fn write_mesh(mesh: &Mesh, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "# h {:?}", mesh.h)?;
    for p in &mesh.vertices {
        writeln!(w, "v {:?} {:?}", p[0], p[1])?;
    }
    for t in &mesh.triangles {
        writeln!(w, "t {} {} {}", t[0], t[1], t[2])?;
    }
    for e in &mesh.boundary {
        writeln!(w, "e {} {} {}", e.v[0], e.v[1], e.tag.name())?;
    }
    Ok(())
}

/// Reads a mesh; the `offset` of a parse error is the 1-based line number.
pub fn read_mesh(r: impl BufRead) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut tags = std::collections::HashMap::new();
    let mut h = f64::NAN;
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| parse_err(n + 1, e.to_string()))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let num = |k: usize| -> Result<f64> {
            parts
                .get(k)
                .ok_or_else(|| parse_err(n + 1, "missing field"))?
                .parse::<f64>()
                .map_err(|e| parse_err(n + 1, e.to_string()))
        };
        let idx = |k: usize| -> Result<usize> {
            parts
                .get(k)
                .ok_or_else(|| parse_err(n + 1, "missing field"))?
                .parse::<usize>()
                .map_err(|e| parse_err(n + 1, e.to_string()))
        };
        match parts.first().copied() {
            None => {}
            Some("#") => {
                if parts.get(1) == Some(&"h") {
                    h = num(2)?;
                }
            }
            Some("v") => vertices.push([num(1)?, num(2)?]),
            Some("t") => triangles.push([idx(1)?, idx(2)?, idx(3)?]),
            Some("e") => {
                let (a, b) = (idx(1)?, idx(2)?);
                let name = parts.get(3).ok_or_else(|| parse_err(n + 1, "missing tag"))?;
                let tag =
                    BoundaryTag::from_name(name).ok_or_else(|| parse_err(n + 1, format!("unknown tag {name}")))?;
                tags.insert((a.min(b), a.max(b)), tag);
            }
            Some(other) => return Err(parse_err(n + 1, format!("unknown record {other}"))),
        }
    }
    let mut mesh = Mesh::from_parts(vertices, triangles, h, |_, _| BoundaryTag::Arc)?;
    for e in mesh.boundary.iter_mut() {
        match tags.get(&(e.v[0].min(e.v[1]), e.v[0].max(e.v[1]))) {
            Some(t) => e.tag = *t,
            None => return Err(parse_err(0, format!("boundary edge {:?} has no tag", e.v))),
        }
    }
    mesh.radius = mesh.inner_radius();
    Ok(mesh)
}

pub fn write_solution_csv(u: &SolutionField, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "vertex_index,x,y,value")?;
    for (i, (p, v)) in u.mesh.vertices.iter().zip(&u.values).enumerate() {
        writeln!(w, "{i},{:?},{:?},{:?}", p[0], p[1], v)?;
    }
    Ok(())
}
