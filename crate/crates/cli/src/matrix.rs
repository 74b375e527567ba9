//! Connectivity matrices as text grids and JSON.

use std::fmt::Write as _;

use serde::Serialize;

use platoon_core::topology::{classify_matrix, connectivity_matrix, extended_connectivity_matrix, ConnectivityMatrix, MatrixClass};
use platoon_core::PlatoonConfig;

/// Reference grid for `-PGGP`; kept to report how the construction rule
/// differs from it.
pub const REFERENCE_PGGP: [[u8; 5]; 5] = [[1, 0, 0, 0, 0], [1, 1, 1, 0, 0], [1, 1, 1, 1, 0], [0, 0, 1, 1, 0], [0, 0, 1, 1, 1]];

#[derive(Debug, Clone, Serialize)]
pub struct MatrixReport {
    pub config: String,
    pub c: Vec<Vec<u8>>,
    pub c_class: MatrixClass,
    pub c_ext: Vec<Vec<u8>>,
    pub c_ext_class: MatrixClass,
    /// `(row, col, ours, reference)` where a reference grid exists.
    pub reference_diff: Option<Vec<(usize, usize, u8, u8)>>,
}

pub fn matrix_report(cfg: &PlatoonConfig) -> anyhow::Result<MatrixReport> {
    let c = connectivity_matrix(cfg);
    let e = extended_connectivity_matrix(cfg);
    let reference_diff = if cfg.to_string() == "-PGGP" {
        let rows: Vec<&[u8]> = REFERENCE_PGGP.iter().map(|r| r.as_slice()).collect();
        let diff = c.diff(&ConnectivityMatrix::from_rows(&rows))?;
        Some(diff.iter().map(|d| (d.row, d.col, d.ours, d.theirs)).collect())
    } else {
        None
    };
    Ok(MatrixReport {
        config: cfg.to_string(),
        c_class: classify_matrix(&c),
        c: c.to_rows(),
        c_ext_class: classify_matrix(&e),
        c_ext: e.to_rows(),
        reference_diff,
    })
}

fn grid(rows: &[Vec<u8>]) -> String {
    rows.iter().map(|r| r.iter().map(u8::to_string).collect::<Vec<_>>().join(" ") + "\n").collect()
}

pub fn render(r: &MatrixReport) -> String {
    let mut s = String::new();
    writeln!(s, "config {}", r.config).unwrap();
    writeln!(s, "C (lower_triangular={}, square={})", r.c_class.lower_triangular, r.c_class.square).unwrap();
    s.push_str(&grid(&r.c));
    writeln!(s, "C' external reference first (lower_triangular={}, square={})", r.c_ext_class.lower_triangular, r.c_ext_class.square)
        .unwrap();
    s.push_str(&grid(&r.c_ext));
    if let Some(diff) = &r.reference_diff {
        writeln!(s, "differences from the reference grid (row col ours reference): {}", diff.len()).unwrap();
        for (row, col, ours, theirs) in diff {
            writeln!(s, "{row} {col} {ours} {theirs}").unwrap();
        }
    }
    s
}
