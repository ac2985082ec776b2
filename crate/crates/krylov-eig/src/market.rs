//! Matrix Market coordinate I/O for real symmetric matrices.
//!
//! Accepts `%%MatrixMarket matrix coordinate real symmetric` (lower or
//! upper triangle stored, mirrored on read) and `... real general`
//! (accepted only when numerically symmetric). Indices are 1-based and
//! comment lines start with `%`.

use crate::error::Error;
use crate::sparse::SparseSymMatrix;
use crate::Result;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Parse result; `duplicates_summed` surfaces how many coordinate lines
/// repeated an already-seen position (the format's convention is to sum
/// them, which we do).
#[derive(Debug)]
pub struct ParsedMarket {
    pub matrix: SparseSymMatrix,
    pub duplicates_summed: usize,
}

pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<ParsedMarket> {
    let mut lines = reader.lines();

    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Market("empty input".into())),
        }
    };

    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" {
        return Err(Error::Market(format!("malformed header: {header:?}")));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(Error::Market(format!(
            "unsupported object/format in header: {header:?} (need matrix coordinate)"
        )));
    }
    if tokens[3] != "real" {
        return Err(Error::Market(format!(
            "non-real field {:?}; only real matrices are supported",
            tokens[3]
        )));
    }
    let symmetric = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => {
            return Err(Error::Market(format!(
                "unsupported symmetry {other:?}; need symmetric or general"
            )))
        }
    };

    // Size line: first non-comment, non-empty line after the header.
    let size_line = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                break line;
            }
            None => return Err(Error::Market("missing size line".into())),
        }
    };
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(Error::Market(format!("malformed size line: {size_line:?}")));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| Error::Market(format!("cannot parse row count {:?}", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| Error::Market(format!("cannot parse column count {:?}", dims[1])))?;
    let nnz: usize = dims[2]
        .parse()
        .map_err(|_| Error::Market(format!("cannot parse entry count {:?}", dims[2])))?;
    if rows != cols {
        return Err(Error::Market(format!("matrix is not square: {rows} x {cols}")));
    }
    let n = rows;

    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz);
    let mut seen = std::collections::HashSet::with_capacity(nnz);
    let mut duplicates_summed = 0usize;
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let i: usize = it
            .next()
            .ok_or_else(|| Error::Market(format!("short entry line: {t:?}")))?
            .parse()
            .map_err(|_| Error::Market(format!("cannot parse row index in {t:?}")))?;
        let j: usize = it
            .next()
            .ok_or_else(|| Error::Market(format!("short entry line: {t:?}")))?
            .parse()
            .map_err(|_| Error::Market(format!("cannot parse column index in {t:?}")))?;
        let v: f64 = it
            .next()
            .ok_or_else(|| Error::Market(format!("missing value in {t:?}")))?
            .parse()
            .map_err(|_| Error::Market(format!("cannot parse value in {t:?}")))?;
        if i < 1 || i > n || j < 1 || j > n {
            return Err(Error::Market(format!(
                "index ({i}, {j}) out of range for n = {n}"
            )));
        }
        if !seen.insert((i, j)) {
            duplicates_summed += 1;
        }
        entries.push((i - 1, j - 1, v));
    }
    if entries.len() != nnz {
        return Err(Error::Market(format!(
            "entry count mismatch: header says {nnz}, found {}",
            entries.len()
        )));
    }

    if symmetric {
        // The format stores one triangle; reject entries from both sides
        // of the diagonal mixing, which from_entries would misread as an
        // explicit full matrix. Normalize to the lower triangle.
        for e in entries.iter_mut() {
            if e.1 > e.0 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
    }
    // For general input, from_entries enforces numerical symmetry.
    let matrix = SparseSymMatrix::from_entries(n, entries)
        .map_err(|e| Error::Market(format!("invalid matrix data: {e}")))?;
    Ok(ParsedMarket {
        matrix,
        duplicates_summed,
    })
}

pub fn read_matrix_market_file<P: AsRef<Path>>(path: P) -> Result<ParsedMarket> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_matrix_market(BufReader::new(file))
}

/// Writes the lower triangle in symmetric coordinate format. Values are
/// printed with Rust's shortest round-trip representation, so
/// `parse(write(A))` reproduces `A` bit-for-bit.
pub fn write_matrix_market<W: Write>(m: &SparseSymMatrix, mut w: W) -> Result<()> {
    let n = m.n();
    let mut lower: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for (j, v) in m.row(i) {
            if j <= i {
                lower.push((i, j, v));
            }
        }
    }
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", n, n, lower.len())?;
    for (i, j, v) in lower {
        writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_symmetric_lower_triangle() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n\
                    % 2x2 example\n\
                    2 2 3\n\
                    1 1 2.0\n\
                    2 1 -1.0\n\
                    2 2 2.0\n";
        let parsed = parse_matrix_market(text.as_bytes()).unwrap();
        let m = parsed.matrix;
        assert_eq!(m.n(), 2);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 2.0);
        assert_eq!(parsed.duplicates_summed, 0);
    }

    #[test]
    fn parses_general_identity() {
        let text = "%%MatrixMarket matrix coordinate real general\n\
                    3 3 3\n\
                    1 1 1.0\n\
                    2 2 1.0\n\
                    3 3 1.0\n";
        let m = parse_matrix_market(text.as_bytes()).unwrap().matrix;
        assert_eq!(m.n(), 3);
        assert!((m.frobenius_norm() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unsymmetric_general() {
        let text = "%%MatrixMarket matrix coordinate real general\n\
                    2 2 2\n\
                    1 2 1.0\n\
                    2 1 1.5\n";
        assert!(parse_matrix_market(text.as_bytes()).is_err());
    }

    #[test]
    fn rejects_bad_header_and_fields() {
        assert!(parse_matrix_market("%%NotMM\n1 1 0\n".as_bytes()).is_err());
        let complex = "%%MatrixMarket matrix coordinate complex symmetric\n1 1 1\n1 1 1 0\n";
        let err = parse_matrix_market(complex.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("non-real"));
        let arr = "%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n1\n";
        assert!(parse_matrix_market(arr.as_bytes()).is_err());
    }

    #[test]
    fn rejects_out_of_range_index() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1.0\n";
        assert!(parse_matrix_market(text.as_bytes()).is_err());
    }

    #[test]
    fn sums_duplicates_and_reports_count() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n\
                    2 2 3\n\
                    1 1 1.0\n\
                    1 1 0.5\n\
                    2 2 1.0\n";
        let parsed = parse_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(parsed.matrix.get(0, 0), 1.5);
        assert_eq!(parsed.duplicates_summed, 1);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = crate::sparse::laplacian_2d(16).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let back = parse_matrix_market(buf.as_slice()).unwrap().matrix;
        assert_eq!(m.n(), back.n());
        assert_eq!(m.row_ptr(), back.row_ptr());
        assert_eq!(m.col_idx(), back.col_idx());
        assert_eq!(m.values(), back.values());
    }
}
