//! Plain-text graph files.
//!
//! ```text
//! # comment
//! n m [w]
//! u v [weight]
//! ```
//! Vertices are 0-indexed. The `w` flag marks a weighted file; without it
//! every edge has weight 1.

use std::fmt::Write as _;

use hetmpc::graph::{SimGraph, WEdge};

use crate::CliError;

pub fn write_graph(g: &SimGraph, weighted: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}{}", g.n, g.m(), if weighted { " w" } else { "" });
    for e in &g.edges {
        if weighted {
            let _ = writeln!(s, "{} {} {}", e.u, e.v, e.w);
        } else {
            let _ = writeln!(s, "{} {}", e.u, e.v);
        }
    }
    s
}

fn parse_err(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, CliError> {
    tok.parse().map_err(|_| parse_err(line, format!("{what} `{tok}` is not a number")))
}

/// Returns the graph and whether the file was weighted.
pub fn read_graph(text: &str) -> Result<(SimGraph, bool), CliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header `n m [w]`"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let weighted = match toks.as_slice() {
        [_, _] => false,
        [_, _, "w"] => true,
        _ => return Err(parse_err(hl, format!("header `{header}` is not `n m [w]`"))),
    };
    let n: usize = num(toks[0], hl, "n")?;
    let m: usize = num(toks[1], hl, "m")?;
    let mut edges = Vec::with_capacity(m);
    for (ln, l) in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        let e = match (t.as_slice(), weighted) {
            ([u, v], false) => WEdge::unweighted(num(u, ln, "vertex")?, num(v, ln, "vertex")?),
            ([u, v, w], true) => WEdge::new(num(u, ln, "vertex")?, num(v, ln, "vertex")?, num(w, ln, "weight")?),
            _ => {
                let want = if weighted { "u v w" } else { "u v" };
                return Err(parse_err(ln, format!("expected `{want}`, got `{l}`")));
            }
        };
        if e.u as usize >= n || e.v as usize >= n {
            return Err(parse_err(ln, format!("vertex out of range 0..{n}")));
        }
        edges.push(e);
    }
    if edges.len() != m {
        return Err(parse_err(hl, format!("header promises {m} edges, file has {}", edges.len())));
    }
    let g = SimGraph::new(n, edges).map_err(|e| parse_err(hl, e.to_string()))?;
    Ok((g, weighted))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let g = SimGraph::new(4, vec![WEdge::new(0, 1, 5), WEdge::new(2, 3, 7)]).unwrap();
        let (back, w) = read_graph(&write_graph(&g, true)).unwrap();
        assert!(w);
        assert_eq!(back, g);
        let u = SimGraph::new(3, vec![WEdge::unweighted(0, 2)]).unwrap();
        assert_eq!(read_graph(&write_graph(&u, false)).unwrap(), (u, false));
    }

    #[test]
    fn comments_and_blank_lines() {
        let (g, _) = read_graph("# a path\n\n3 2\n0 1 # first\n1 2\n").unwrap();
        assert_eq!(g.m(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = [("", 1), ("3\n", 1), ("3 1\n0 x\n", 2), ("3 1\n0 5\n", 2), ("3 2\n0 1\n", 1), ("3 1 w\n0 1\n", 2)];
        for (text, line) in bad {
            match read_graph(text) {
                Err(CliError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
