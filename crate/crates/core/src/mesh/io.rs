//! Plain-text mesh files.
//!
//! ```text
//! n <dim>
//! v <count>
//! <x_1> ... <x_dim>          (count lines)
//! c <count>
//! <v_0> ... <v_dim> <tag>    (count lines)
//! d <count>
//! <v_0> ... <v_{dim-1}>      (count lines)
//! ```
//!
//! Tokens are whitespace separated and `#` starts a comment. The `d`
//! section may be omitted when there are no Dirichlet facets.

use std::fmt::Write as _;

use super::{MeshError, Point, SimplicialComplex};

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, split into tokens.
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = content.split_whitespace().collect();
            if !toks.is_empty() {
                return Some((i + 1, toks));
            }
        }
        None
    }

    fn header(&mut self, tag: &str) -> Result<Option<usize>, MeshError> {
        let Some((line, toks)) = self.next_tokens() else {
            return Ok(None);
        };
        if toks.len() != 2 || toks[0] != tag {
            return Err(parse_err(line, format!("expected `{tag} <count>`")));
        }
        toks[1]
            .parse()
            .map(Some)
            .map_err(|_| parse_err(line, format!("bad count `{}`", toks[1])))
    }
}

/// Parses a complex from the mesh file format and validates it.
pub fn read_mesh(text: &str) -> Result<SimplicialComplex, MeshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let dim = lines
        .header("n")?
        .ok_or_else(|| parse_err(lines.last, "missing `n` header"))?;
    if dim == 0 {
        return Err(parse_err(lines.last, "dimension must be positive"));
    }
    let nv = lines
        .header("v")?
        .ok_or_else(|| parse_err(lines.last, "missing `v` section"))?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, toks) = lines
            .next_tokens()
            .ok_or_else(|| parse_err(lines.last, "truncated vertex list"))?;
        if toks.len() != dim {
            return Err(parse_err(line, format!("expected {dim} coordinates")));
        }
        let coords = toks
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("bad coordinate `{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        vertices.push(Point(coords));
    }
    let nc = lines
        .header("c")?
        .ok_or_else(|| parse_err(lines.last, "missing `c` section"))?;
    let mut cells = Vec::with_capacity(nc);
    let mut tags = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (line, toks) = lines
            .next_tokens()
            .ok_or_else(|| parse_err(lines.last, "truncated cell list"))?;
        if toks.len() != dim + 2 {
            return Err(parse_err(
                line,
                format!("expected {} vertex ids and a region tag", dim + 1),
            ));
        }
        let ids = toks[..=dim]
            .iter()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(line, format!("bad vertex id `{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let tag = toks[dim + 1]
            .parse::<i32>()
            .map_err(|_| parse_err(line, format!("bad region tag `{}`", toks[dim + 1])))?;
        cells.push(ids);
        tags.push(tag);
    }
    let nd = lines.header("d")?.unwrap_or(0);
    let mut dirichlet = Vec::with_capacity(nd);
    for _ in 0..nd {
        let (line, toks) = lines
            .next_tokens()
            .ok_or_else(|| parse_err(lines.last, "truncated facet list"))?;
        if toks.len() != dim {
            return Err(parse_err(line, format!("expected {dim} vertex ids")));
        }
        let ids = toks
            .iter()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(line, format!("bad vertex id `{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        dirichlet.push(ids);
    }
    if let Some((line, _)) = lines.next_tokens() {
        return Err(parse_err(line, "unexpected trailing content"));
    }
    SimplicialComplex::build(&vertices, &cells, &dirichlet, &tags)
}

/// Serializes a complex. Coordinates use the shortest round-trip decimal
/// form, so `write(read(write(c)))` reproduces the same bytes.
pub fn write_mesh(c: &SimplicialComplex) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n {}", c.dim());
    let _ = writeln!(out, "v {}", c.num_vertices());
    for i in 0..c.num_vertices() {
        let line: Vec<String> = c.vertex(i).iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    let _ = writeln!(out, "c {}", c.num_cells());
    for (ci, s) in c.cells().iter().enumerate() {
        let ids: Vec<String> = s.vertices().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{} {}", ids.join(" "), c.region_tag(ci));
    }
    let _ = writeln!(out, "d {}", c.dirichlet_facets().len());
    for &f in c.dirichlet_facets() {
        let ids: Vec<String> = c.facet(f).vertices().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{}", ids.join(" "));
    }
    out
}
