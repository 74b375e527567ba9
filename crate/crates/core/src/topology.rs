//! Platoon configuration strings, egoLeader election and connectivity matrices.
//!
//! A configuration such as `-PLPP` lists the controller of every platoon
//! member front to back. Each follower elects as egoLeader the nearest
//! vehicle ahead running a *different* controller; when there is none the
//! follower is guided by an external reference instead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Longitudinal control law run by a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Controller {
    /// Independent head following its own speed profile (`-`).
    Independent,
    /// Radar-only constant time headway ACC (`A`).
    Acc,
    /// PATH constant spacing CACC (`P`).
    Path,
    /// Ploeg time headway CACC (`L`).
    Ploeg,
    /// GSBL bidirectional spring-damper CACC (`G`).
    Gsbl,
    /// Human driver model; only used for non-platoon ring traffic (`I`).
    Idm,
}

impl Controller {
    pub const CACC: [Controller; 3] = [Controller::Path, Controller::Ploeg, Controller::Gsbl];

    pub fn symbol(self) -> char {
        match self {
            Controller::Independent => '-',
            Controller::Acc => 'A',
            Controller::Path => 'P',
            Controller::Ploeg => 'L',
            Controller::Gsbl => 'G',
            Controller::Idm => 'I',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            '-' => Controller::Independent,
            'A' => Controller::Acc,
            'P' => Controller::Path,
            'L' => Controller::Ploeg,
            'G' => Controller::Gsbl,
            'I' => Controller::Idm,
            _ => return None,
        })
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Ordered controller assignment of one platoon.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PlatoonConfig {
    controllers: Vec<Controller>,
}

impl PlatoonConfig {
    pub fn new(controllers: Vec<Controller>) -> Result<Self> {
        if controllers.len() < 2 {
            return Err(CoreError::ConfigParse { index: controllers.len(), reason: "a platoon needs at least 2 vehicles".into() });
        }
        for (i, c) in controllers.iter().enumerate() {
            match c {
                Controller::Independent if i > 0 => {
                    return Err(CoreError::ConfigParse { index: i, reason: "'-' is only allowed at index 0".into() })
                }
                Controller::Idm => return Err(CoreError::ConfigParse { index: i, reason: "'I' is not a platoon controller".into() }),
                _ => {}
            }
        }
        Ok(Self { controllers })
    }

    /// An independent head followed by `n - 1` vehicles running `ctrl`.
    pub fn homogeneous(ctrl: Controller, n: usize) -> Result<Self> {
        let mut v = vec![Controller::Independent];
        v.extend(std::iter::repeat_n(ctrl, n.saturating_sub(1)));
        Self::new(v)
    }

    pub fn len(&self) -> usize {
        self.controllers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controllers.is_empty()
    }

    pub fn controllers(&self) -> &[Controller] {
        &self.controllers
    }

    pub fn get(&self, i: usize) -> Controller {
        self.controllers[i]
    }

    /// The distinct follower controllers present, in first-seen order.
    pub fn follower_kinds(&self) -> Vec<Controller> {
        let mut out = Vec::new();
        for &c in &self.controllers[1..] {
            if c != Controller::Independent && !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub fn is_homogeneous(&self) -> bool {
        self.follower_kinds().len() <= 1
    }
}

/// Parse a configuration string such as `-PLPP`.
pub fn parse_config(text: &str) -> Result<PlatoonConfig> {
    let mut controllers = Vec::with_capacity(text.len());
    for (i, ch) in text.chars().enumerate() {
        match Controller::from_symbol(ch) {
            Some(Controller::Idm) | None => {
                return Err(CoreError::ConfigParse { index: i, reason: format!("unknown controller symbol {ch:?}") })
            }
            Some(c) => controllers.push(c),
        }
    }
    PlatoonConfig::new(controllers)
}

impl FromStr for PlatoonConfig {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        parse_config(s)
    }
}

impl TryFrom<String> for PlatoonConfig {
    type Error = CoreError;
    fn try_from(s: String) -> Result<Self> {
        parse_config(&s)
    }
}

impl From<PlatoonConfig> for String {
    fn from(c: PlatoonConfig) -> String {
        c.to_string()
    }
}

impl fmt::Display for PlatoonConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.controllers {
            write!(f, "{}", c.symbol())?;
        }
        Ok(())
    }
}

/// Source of the "leader" information a follower uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EgoLeader {
    Vehicle(usize),
    /// No differing vehicle ahead: guided by an external speed reference.
    External,
}

impl EgoLeader {
    pub fn vehicle(self) -> Option<usize> {
        match self {
            EgoLeader::Vehicle(j) => Some(j),
            EgoLeader::External => None,
        }
    }
}

/// egoLeader of every vehicle; index 0 maps to `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EgoLeaderMap {
    leaders: Vec<Option<EgoLeader>>,
}

impl EgoLeaderMap {
    pub fn get(&self, i: usize) -> Option<EgoLeader> {
        self.leaders[i]
    }

    pub fn len(&self) -> usize {
        self.leaders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaders.is_empty()
    }
}

pub fn elect_ego_leaders(cfg: &PlatoonConfig) -> EgoLeaderMap {
    let ctr = cfg.controllers();
    let leaders = (0..ctr.len())
        .map(|i| {
            if i == 0 {
                return None;
            }
            let found = (0..i).rev().find(|&j| ctr[j] != ctr[i]);
            Some(found.map_or(EgoLeader::External, EgoLeader::Vehicle))
        })
        .collect();
    EgoLeaderMap { leaders }
}

/// Whether vehicle `i` follows an external reference rather than a vehicle.
fn externally_guided(cfg: &PlatoonConfig, leaders: &EgoLeaderMap, i: usize) -> bool {
    match cfg.get(i) {
        Controller::Gsbl => i == 0 || leaders.get(i) == Some(EgoLeader::External),
        _ => false,
    }
}

/// Dense 0/1 matrix. Rows are vehicles; columns are vehicles, optionally
/// preceded by an external-reference column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    rows: usize,
    cols: usize,
    /// True when column 0 is the external reference.
    external_column: bool,
    cells: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixClass {
    pub lower_triangular: bool,
    pub square: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDiff {
    pub row: usize,
    pub col: usize,
    pub ours: u8,
    pub theirs: u8,
}

impl ConnectivityMatrix {
    pub fn zeros(rows: usize, cols: usize, external_column: bool) -> Self {
        Self { rows, cols, external_column, cells: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(rows.len(), cols, false);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged matrix");
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn has_external_column(&self) -> bool {
        self.external_column
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.cells[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.cells[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.cells[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sum(&self, r: usize) -> usize {
        self.row(r).iter().map(|&v| v as usize).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Remove the external-reference column, if any.
    pub fn without_external_column(&self) -> Self {
        if !self.external_column {
            return self.clone();
        }
        let mut m = Self::zeros(self.rows, self.cols - 1, false);
        for r in 0..self.rows {
            for c in 1..self.cols {
                m.set(r, c - 1, self.get(r, c));
            }
        }
        m
    }

    /// Cell-level differences against another matrix of identical shape.
    pub fn diff(&self, other: &ConnectivityMatrix) -> Result<Vec<CellDiff>> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::InvalidParam(format!("shape mismatch: {}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (a, b) = (self.get(r, c), other.get(r, c));
                if a != b {
                    out.push(CellDiff { row: r, col: c, ours: a, theirs: b });
                }
            }
        }
        Ok(out)
    }

    /// Plain-text grid, one row per line, cells separated by a space.
    pub fn to_grid(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

fn build(cfg: &PlatoonConfig, extended: bool) -> ConnectivityMatrix {
    let n = cfg.len();
    let off = usize::from(extended);
    let leaders = elect_ego_leaders(cfg);
    let mut m = ConnectivityMatrix::zeros(n, n + off, extended);
    for i in 0..n {
        m.set(i, i + off, 1);
        let ctrl = cfg.get(i);
        if i > 0 {
            match ctrl {
                Controller::Acc | Controller::Ploeg => m.set(i, i - 1 + off, 1),
                Controller::Path | Controller::Gsbl => {
                    m.set(i, i - 1 + off, 1);
                    if let Some(Some(j)) = leaders.get(i).map(EgoLeader::vehicle) {
                        m.set(i, j + off, 1);
                    }
                }
                Controller::Independent | Controller::Idm => {}
            }
        }
        if ctrl == Controller::Gsbl && i + 1 < n {
            m.set(i, i + 1 + off, 1);
        }
        if extended && externally_guided(cfg, &leaders, i) {
            m.set(i, 0, 1);
        }
    }
    m
}

pub fn connectivity_matrix(cfg: &PlatoonConfig) -> ConnectivityMatrix {
    build(cfg, false)
}

pub fn extended_connectivity_matrix(cfg: &PlatoonConfig) -> ConnectivityMatrix {
    build(cfg, true)
}

/// Structural classification. Triangularity is only defined for square
/// matrices; a non-square matrix reports `lower_triangular = false`.
pub fn classify_matrix(m: &ConnectivityMatrix) -> MatrixClass {
    let square = m.rows == m.cols;
    let lower_triangular = square && (0..m.rows).all(|r| (r + 1..m.cols).all(|c| m.get(r, c) == 0));
    MatrixClass { lower_triangular, square }
}

/// All `3^(n-1)` follower mixes over {P, L, G} behind an independent head,
/// sorted lexicographically by their string form.
pub fn enumerate_mixes(n: usize) -> Vec<PlatoonConfig> {
    let followers = n.saturating_sub(1) as u32;
    let total = 3usize.pow(followers);
    let mut out: Vec<PlatoonConfig> = (0..total)
        .map(|mut code| {
            let mut v = vec![Controller::Independent];
            for _ in 0..followers {
                v.push(Controller::CACC[code % 3]);
                code /= 3;
            }
            PlatoonConfig { controllers: v }
        })
        .collect();
    out.sort_by_key(|c| c.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Controller::*;

    #[test]
    fn parse_worked_examples() {
        assert_eq!(parse_config("-PLL").unwrap().controllers(), &[Independent, Path, Ploeg, Ploeg]);
        assert_eq!(parse_config("GGGL").unwrap().controllers(), &[Gsbl, Gsbl, Gsbl, Ploeg]);
    }

    #[test]
    fn parse_errors_name_the_position() {
        assert_eq!(parse_config("-P-L").unwrap_err(), CoreError::ConfigParse { index: 2, reason: "'-' is only allowed at index 0".into() });
        assert!(matches!(parse_config("-PXL"), Err(CoreError::ConfigParse { index: 2, .. })));
        assert!(matches!(parse_config("-"), Err(CoreError::ConfigParse { .. })));
        assert!(parse_config("").is_err());
        assert!(parse_config("-PI").is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["-PLPP", "GGGL", "-AAA", "GGPPPL"] {
            assert_eq!(parse_config(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn ego_leaders_worked_example() {
        let m = elect_ego_leaders(&parse_config("-PLPP").unwrap());
        let got: Vec<_> = (1..5).map(|i| m.get(i).unwrap()).collect();
        use EgoLeader::Vehicle as V;
        assert_eq!(got, vec![V(0), V(1), V(2), V(2)]);
        assert_eq!(m.get(0), None);
    }

    #[test]
    fn ego_leaders_all_same_controller_is_external() {
        let m = elect_ego_leaders(&parse_config("GGG").unwrap());
        assert_eq!(m.get(1), Some(EgoLeader::External));
        assert_eq!(m.get(2), Some(EgoLeader::External));
    }

    #[test]
    fn homogeneous_followers_elect_the_head() {
        for n in 2..=8 {
            for c in [Acc, Path, Ploeg, Gsbl] {
                let cfg = PlatoonConfig::homogeneous(c, n).unwrap();
                let m = elect_ego_leaders(&cfg);
                assert!((1..n).all(|i| m.get(i) == Some(EgoLeader::Vehicle(0))));
            }
        }
    }

    #[test]
    fn predecessor_following_is_lower_bidiagonal() {
        let m = connectivity_matrix(&parse_config("-LLLL").unwrap());
        for r in 0..5 {
            for c in 0..5 {
                let expect = u8::from(c == r || (r > 0 && c + 1 == r));
                assert_eq!(m.get(r, c), expect, "cell ({r},{c})");
            }
        }
        let e = extended_connectivity_matrix(&parse_config("-LLLL").unwrap());
        assert!((0..5).all(|r| e.get(r, 0) == 0));
    }

    #[test]
    fn classification() {
        let c = connectivity_matrix(&parse_config("-PPPP").unwrap());
        assert_eq!(classify_matrix(&c), MatrixClass { lower_triangular: true, square: true });
        let g = connectivity_matrix(&parse_config("-PGP").unwrap());
        assert!(!classify_matrix(&g).lower_triangular);
        let e = extended_connectivity_matrix(&parse_config("GGGGG").unwrap());
        assert!(!classify_matrix(&e).square);
    }

    #[test]
    fn extended_without_external_column_equals_plain() {
        for s in ["-PGGP", "GGGGG", "GGPPPL", "-LPG"] {
            let cfg = parse_config(s).unwrap();
            assert_eq!(extended_connectivity_matrix(&cfg).without_external_column(), connectivity_matrix(&cfg));
        }
    }

    #[test]
    fn mix_enumeration_is_sorted_and_complete() {
        let mixes = enumerate_mixes(4);
        assert_eq!(mixes.len(), 27);
        assert_eq!(mixes[0].to_string(), "-GGG");
        assert_eq!(mixes[26].to_string(), "-PPP");
        let names: Vec<String> = mixes.iter().map(|c| c.to_string()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(names, sorted);
        assert_eq!(enumerate_mixes(8).len(), 2187);
    }

    #[test]
    fn grid_format() {
        let m = connectivity_matrix(&parse_config("-L").unwrap());
        assert_eq!(m.to_grid(), "1 0\n1 1\n");
    }
}
