//! NAS-Bench-201 cell strings.
//!
//! A cell is a 4-node DAG. Node `j` (1..=3) sums one operation applied to each
//! earlier node, and the string lists the nodes as `+`-separated groups:
//!
//! ```text
//! |skip_connect~0|+|nor_conv_3x3~0|nor_conv_1x1~1|+|nor_conv_1x1~0|nor_conv_3x3~1|nor_conv_3x3~2|
//! ```
//!
//! Group `j` holds exactly `j` edges whose source indices are `0..j` in order.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Nb201Op {
    None,
    SkipConnect,
    NorConv1x1,
    NorConv3x3,
    AvgPool3x3,
}

impl Nb201Op {
    pub const ALL: [Nb201Op; 5] = [
        Nb201Op::None,
        Nb201Op::SkipConnect,
        Nb201Op::NorConv1x1,
        Nb201Op::NorConv3x3,
        Nb201Op::AvgPool3x3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Nb201Op::None => "none",
            Nb201Op::SkipConnect => "skip_connect",
            Nb201Op::NorConv1x1 => "nor_conv_1x1",
            Nb201Op::NorConv3x3 => "nor_conv_3x3",
            Nb201Op::AvgPool3x3 => "avg_pool_3x3",
        }
    }

    /// Kernel size for the two convolution ops.
    pub fn conv_kernel(self) -> Option<usize> {
        match self {
            Nb201Op::NorConv1x1 => Some(1),
            Nb201Op::NorConv3x3 => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for Nb201Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Nb201Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Nb201Op::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| Error::parse(s, "unknown NB201 operation"))
    }
}

/// Edge operations in the order `(1←0), (2←0), (2←1), (3←0), (3←1), (3←2)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Nb201Cell {
    pub ops: [Nb201Op; 6],
}

impl Nb201Cell {
    pub fn new(ops: [Nb201Op; 6]) -> Self {
        Nb201Cell { ops }
    }

    /// Position in `ops` of the edge from node `from` into node `to`.
    pub fn edge_index(to: usize, from: usize) -> usize {
        debug_assert!(from < to && (1..=3).contains(&to));
        to * (to - 1) / 2 + from
    }

    pub fn op(&self, to: usize, from: usize) -> Nb201Op {
        self.ops[Self::edge_index(to, from)]
    }
}

impl fmt::Display for Nb201Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_nb201(self))
    }
}

impl FromStr for Nb201Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_nb201(s)
    }
}

pub fn serialize_nb201(cell: &Nb201Cell) -> String {
    let mut out = String::new();
    for to in 1..=3 {
        if to > 1 {
            out.push('+');
        }
        out.push('|');
        for from in 0..to {
            out.push_str(cell.op(to, from).as_str());
            out.push('~');
            out.push_str(&from.to_string());
            out.push('|');
        }
    }
    out
}

pub fn parse_nb201(s: &str) -> Result<Nb201Cell> {
    let groups: Vec<&str> = s.split('+').collect();
    if groups.len() != 3 {
        return Err(Error::parse(s, format!("expected 3 '+'-separated node groups, found {}", groups.len())));
    }
    let mut ops = [Nb201Op::None; 6];
    for (g, group) in groups.iter().enumerate() {
        let to = g + 1;
        let inner = group
            .strip_prefix('|')
            .and_then(|x| x.strip_suffix('|'))
            .ok_or_else(|| Error::parse(*group, "node group must start and end with '|'"))?;
        let edges: Vec<&str> = inner.split('|').collect();
        if edges.len() != to {
            return Err(Error::parse(
                *group,
                format!("node {to} needs {to} edge(s), found {}", edges.len()),
            ));
        }
        for (from, edge) in edges.iter().enumerate() {
            let (name, src) = edge
                .split_once('~')
                .ok_or_else(|| Error::parse(*edge, "edge must be <op>~<source>"))?;
            let op: Nb201Op = name.parse()?;
            if src != from.to_string() {
                return Err(Error::parse(*edge, format!("expected source index {from}")));
            }
            ops[Nb201Cell::edge_index(to, from)] = op;
        }
    }
    Ok(Nb201Cell { ops })
}
