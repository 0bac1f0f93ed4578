use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Bits, PbpError, Polynomial};

/// `min xᵀQx + offset` over binary `x`, with `Q` kept upper-triangular.
///
/// The diagonal holds linear coefficients (`x_i² = x_i`); each unordered pair
/// `i < j` is stored once with its full coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboProblem {
    n: usize,
    linear: Vec<f64>,
    quadratic: Vec<(usize, usize, f64)>,
    offset: f64,
}

impl QuboProblem {
    pub fn empty(n: usize, offset: f64) -> Self {
        Self { n, linear: vec![0.0; n], quadratic: Vec::new(), offset }
    }

    /// Builds from `(i, j, value)` triples. `(i, j)` and `(j, i)` refer to
    /// the same coupling and are summed.
    pub fn from_entries<I>(n: usize, offset: f64, entries: I) -> Result<Self, PbpError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut linear = vec![0.0; n];
        let mut quad: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in entries {
            for index in [i, j] {
                if index >= n {
                    return Err(PbpError::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                linear[i] += v;
            } else {
                *quad.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
            }
        }
        let quadratic = quad.into_iter().filter(|&(_, v)| v != 0.0).map(|((i, j), v)| (i, j, v)).collect();
        Ok(Self { n, linear, quadratic, offset })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Off-diagonal couplings `(i, j, value)` with `i < j`, sorted.
    pub fn quadratic(&self) -> &[(usize, usize, f64)] {
        &self.quadratic
    }

    /// Upper-triangular entry `Q_ij`; `get(j, i)` returns the same value.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.linear.get(i).copied().unwrap_or(0.0);
        }
        let key = (i.min(j), i.max(j));
        self.quadratic
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|k| self.quadratic[k].2)
            .unwrap_or(0.0)
    }

    /// Every nonzero upper-triangular entry, diagonal included, in row order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = self
            .linear
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i, i, v))
            .chain(self.quadratic.iter().copied())
            .collect();
        out.sort_by_key(|a| (a.0, a.1));
        out
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear
            .iter()
            .copied()
            .chain(self.quadratic.iter().map(|e| e.2))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Σ|Q_ij| + |offset|, a scale for energy comparisons.
    pub fn magnitude(&self) -> f64 {
        self.linear.iter().map(|v| v.abs()).sum::<f64>()
            + self.quadratic.iter().map(|e| e.2.abs()).sum::<f64>()
            + self.offset.abs()
    }

    /// Per-variable neighbour lists `(j, Q_ij)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, v) in &self.quadratic {
            adj[i].push((j, v));
            adj[j].push((i, v));
        }
        adj
    }

    /// `xᵀQx + offset`.
    pub fn energy(&self, x: &Bits) -> Result<f64, PbpError> {
        if x.len() != self.n {
            return Err(PbpError::LengthMismatch { expected: self.n, got: x.len() });
        }
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &Bits) -> f64 {
        let mut e = self.offset;
        for (i, &v) in self.linear.iter().enumerate() {
            if x[i] != 0 {
                e += v;
            }
        }
        for &(i, j, v) in &self.quadratic {
            if x[i] != 0 && x[j] != 0 {
                e += v;
            }
        }
        e
    }

    /// Line-oriented text form: `n <count> offset <real>` then `i j value`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n {} offset {}", self.n, self.offset);
        for (i, j, v) in self.entries() {
            let _ = writeln!(s, "{i} {j} {v}");
        }
        s
    }

    /// Parses the text form. `#` starts a comment; entries need `i <= j`, and
    /// each position may appear once.
    pub fn from_text(text: &str) -> Result<Self, PbpError> {
        let mut header: Option<(usize, f64)> = None;
        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut entries = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: String| PbpError::Parse { line, msg };
            let fields: Vec<&str> = body.split_whitespace().collect();
            match header {
                None => {
                    if fields.len() != 4 || fields[0] != "n" || fields[2] != "offset" {
                        return Err(err(format!("expected `n <count> offset <real>`, found `{body}`")));
                    }
                    let n = fields[1].parse::<usize>().map_err(|e| err(format!("bad count: {e}")))?;
                    let offset = parse_real(fields[3]).map_err(err)?;
                    header = Some((n, offset));
                }
                Some((n, _)) => {
                    if fields.len() != 3 {
                        return Err(err(format!("expected `i j value`, found `{body}`")));
                    }
                    let i = fields[0].parse::<usize>().map_err(|e| err(format!("bad row index: {e}")))?;
                    let j = fields[1].parse::<usize>().map_err(|e| err(format!("bad column index: {e}")))?;
                    let v = parse_real(fields[2]).map_err(err)?;
                    if i > j {
                        return Err(err(format!("entry ({i}, {j}) is below the diagonal")));
                    }
                    if j >= n {
                        return Err(err(format!("index {j} out of range for n = {n}")));
                    }
                    if let Some(prev) = seen.insert((i, j), line) {
                        return Err(err(format!("entry ({i}, {j}) already given on line {prev}")));
                    }
                    entries.push((i, j, v));
                }
            }
        }
        let (n, offset) = header.ok_or(PbpError::Parse { line: 0, msg: "missing header line".into() })?;
        Self::from_entries(n, offset, entries)
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("bad real `{s}`: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value `{s}`"))
    }
}

/// QUBO over `max var + 1` variables.
pub fn to_qubo(p: &Polynomial) -> Result<QuboProblem, PbpError> {
    let n = p.max_var().map_or(0, |v| v.index() + 1);
    to_qubo_sized(p, n)
}

/// QUBO over exactly `n` variables; variables absent from `p` get zero rows.
pub fn to_qubo_sized(p: &Polynomial, n: usize) -> Result<QuboProblem, PbpError> {
    let deg = p.degree();
    if deg > 2 {
        return Err(PbpError::DegreeTooHigh(deg));
    }
    let mut offset = 0.0;
    let mut entries = Vec::with_capacity(p.num_terms());
    for (m, c) in p.terms() {
        match m.vars() {
            [] => offset += c,
            [a] => entries.push((a.index(), a.index(), c)),
            [a, b] => entries.push((a.index(), b.index(), c)),
            _ => unreachable!(),
        }
    }
    QuboProblem::from_entries(n, offset, entries)
}
