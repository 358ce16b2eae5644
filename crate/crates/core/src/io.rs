//! Plain-text file formats.
//!
//! Numbers are written in the shortest decimal form that parses back to the
//! same `f64`, so every write/read cycle is exact.
//!
//! * matrix: `n,<n>` then `n` rows of comma-separated values
//! * factor: `<n>,<m>` then one row per measurement `i,α_i,Γ_i...` (1-based
//!   `i`; the last row carries no `Γ`)
//! * banded: `<n>,<m>` then `i,j,c_ij` for each stored entry with `i <= j`
//! * vector: one value per line; blank lines and `#` comments ignored

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::markov::{BandedMatrix, MarkovFactor};

/// Shortest round-trip decimal representation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {line}: bad number {s:?}: {e}")))
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| Error::Parse(format!("line {line}: bad integer {s:?}: {e}")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn write_matrix(mat: &DMatrix<f64>) -> String {
    let mut out = format!("n,{}\n", mat.nrows());
    for i in 0..mat.nrows() {
        let row: Vec<String> = (0..mat.ncols()).map(|j| fmt_f64(mat[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let n = match header.split_once(',') {
        Some((tag, v)) if tag.trim() == "n" => parse_usize(v, hl)?,
        _ => return Err(Error::Parse(format!("line {hl}: expected header `n,<n>`"))),
    };
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (ln, line) in lines {
        let row = line
            .split(',')
            .map(|s| parse_f64(s, ln))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != n {
            return Err(Error::Parse(format!("line {ln}: expected {n} values, got {}", row.len())));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse(format!("expected {n} rows, got {rows}")));
    }
    Ok(DMatrix::from_row_slice(n, n, &data))
}

pub fn write_factor(f: &MarkovFactor) -> String {
    let mut out = format!("{},{}\n", f.n(), f.m());
    for i in 0..f.n() {
        let _ = write!(out, "{},{}", i + 1, fmt_f64(f.alphas()[i]));
        if let Some(g) = f.gammas().get(i) {
            for v in g {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a factor file; the band of `K^m` is rebuilt from `Γ` and `α`.
pub fn read_factor(text: &str) -> Result<MarkovFactor> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Parse("empty factor file".into()))?;
    let (n, m) = match header.split_once(',') {
        Some((a, b)) => (parse_usize(a, hl)?, parse_usize(b, hl)?),
        None => return Err(Error::Parse(format!("line {hl}: expected header `<n>,<m>`"))),
    };
    let mut alphas = Vec::with_capacity(n);
    let mut gammas = Vec::with_capacity(n.saturating_sub(1));
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse(format!("line {ln}: expected `i,alpha,...`")));
        }
        let i = parse_usize(fields[0], ln)?;
        if i != alphas.len() + 1 {
            return Err(Error::Parse(format!("line {ln}: expected row {}, got {i}", alphas.len() + 1)));
        }
        alphas.push(parse_f64(fields[1], ln)?);
        let g = fields[2..].iter().map(|s| parse_f64(s, ln)).collect::<Result<Vec<_>>>()?;
        if i < n {
            gammas.push(g);
        } else if !g.is_empty() {
            return Err(Error::Parse(format!("line {ln}: last row must not carry gamma values")));
        }
    }
    if alphas.len() != n {
        return Err(Error::Parse(format!("expected {n} rows, got {}", alphas.len())));
    }
    MarkovFactor::from_parts(m, gammas, alphas)
}

pub fn write_banded(b: &BandedMatrix) -> String {
    let mut out = format!("{},{}\n", b.n(), b.m());
    for i in 0..b.n() {
        for j in i..(i + b.m() + 1).min(b.n()) {
            let _ = writeln!(out, "{},{},{}", i + 1, j + 1, fmt_f64(b.get(i, j)));
        }
    }
    out
}

/// Reads a symmetric band written by [`write_banded`].
pub fn read_banded(text: &str) -> Result<BandedMatrix> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::Parse("empty banded file".into()))?;
    let (n, m) = match header.split_once(',') {
        Some((a, b)) => (parse_usize(a, hl)?, parse_usize(b, hl)?),
        None => return Err(Error::Parse(format!("line {hl}: expected header `<n>,<m>`"))),
    };
    let mut b = BandedMatrix::zeros(n, m, true);
    for (ln, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {ln}: expected `i,j,value`")));
        }
        let (i, j) = (parse_usize(f[0], ln)?, parse_usize(f[1], ln)?);
        if i == 0 || j == 0 || i > n || j > n || i.abs_diff(j) > b.m() {
            return Err(Error::Parse(format!("line {ln}: entry ({i},{j}) outside band")));
        }
        b.set(i - 1, j - 1, parse_f64(f[2], ln)?);
    }
    Ok(b)
}

pub fn write_vector(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x) + "\n").collect()
}

pub fn read_vector(text: &str) -> Result<Vec<f64>> {
    content_lines(text)
        .flat_map(|(ln, l)| l.split(',').map(move |s| (ln, s)))
        .filter(|(_, s)| !s.trim().is_empty())
        .map(|(ln, s)| parse_f64(s, ln))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodels::{build_cov_matrix, CovKernel, Grid};
    use proptest::prelude::*;

    #[test]
    fn matrix_format_layout() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(write_matrix(&m), "n,2\n1.0,0.5\n0.5,1.0\n");
        assert_eq!(read_matrix("n,2\n1,0.5\n0.5,1\n").unwrap(), m);
        assert!(read_matrix("n,2\n1,0.5\n").is_err());
        assert!(read_matrix("2\n1,0.5\n0.5,1\n").is_err());
        assert!(read_matrix("n,2\n1,0.5,3\n0.5,1\n").is_err());
    }

    #[test]
    fn factor_roundtrip() {
        let k = build_cov_matrix(&CovKernel::exp_quad_cos(3.0, 10.0), &Grid::equidistant(7, -1.0, 1.0).unwrap())
            .unwrap();
        let f = MarkovFactor::new(&k, 2).unwrap();
        let text = write_factor(&f);
        assert!(text.starts_with("7,2\n1,1.0,"), "{text}");
        let back = read_factor(&text).unwrap();
        assert_eq!(back.gammas(), f.gammas());
        assert_eq!(back.alphas(), f.alphas());
        assert!(read_factor("3,1\n1,1.0\n2,0.5,0.1\n3,0.9\n").is_err());
    }

    #[test]
    fn banded_roundtrip() {
        let mut b = BandedMatrix::zeros(4, 1, true);
        for i in 0..4 {
            b.set(i, i, 2.0 + i as f64);
        }
        b.set(0, 1, -0.25);
        let text = write_banded(&b);
        assert!(text.starts_with("4,1\n1,1,2.0\n1,2,-0.25\n"));
        assert_eq!(read_banded(&text).unwrap(), b);
        assert!(read_banded("4,1\n1,3,0.5\n").is_err());
    }

    #[test]
    fn vector_parsing() {
        assert_eq!(read_vector("# z\n1\n2.5\n\n3\n").unwrap(), vec![1.0, 2.5, 3.0]);
        assert_eq!(read_vector("1,2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(read_vector("1\nx\n").is_err());
    }

    proptest! {
        #[test]
        fn matrix_text_roundtrip_is_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 9)) {
            let m = DMatrix::from_row_slice(3, 3, &vals);
            let back = read_matrix(&write_matrix(&m)).unwrap();
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
