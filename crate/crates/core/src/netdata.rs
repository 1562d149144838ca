//! Undirected binary networks with node covariates.
//!
//! Raw friendship nominations are directed; [`load_network`] symmetrizes them
//! under either the union or the mutual rule. Dyads `(i, j)` with `i < j` are
//! always laid out in canonical order: `i` ascending, then `j` ascending.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Grades recorded by the survey instrument.
pub const DEFAULT_GRADE_RANGE: (i32, i32) = (7, 12);

/// Degree-bin cutpoints giving the ranges 0–3, 4–7 and 8+.
pub const DEFAULT_DEGREE_CUTPOINTS: [usize; 2] = [3, 7];

/// Number of unordered dyads on `n` nodes.
#[inline]
pub fn n_dyads(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of dyad `(i, j)`, `i < j`, in canonical order.
#[inline]
pub fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All dyads in canonical order.
pub fn dyads(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrization {
    /// Edge if either endpoint nominated the other.
    Union,
    /// Edge only if both endpoints nominated each other.
    Mutual,
}

impl FromStr for Symmetrization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(Self::Union),
            "mutual" => Ok(Self::Mutual),
            other => Err(Error::InvalidInput(format!(
                "unknown symmetrization `{other}` (expected union or mutual)"
            ))),
        }
    }
}

impl fmt::Display for Symmetrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Union => "union",
            Self::Mutual => "mutual",
        })
    }
}

/// Symmetric, zero-diagonal binary adjacency over nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sociomatrix {
    node_ids: Vec<String>,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
    n_edges: usize,
}

impl Sociomatrix {
    /// Builds from undirected edges; duplicates collapse, self-loops are rejected.
    pub fn from_edges(
        node_ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = node_ids.len();
        let mut seen = HashSet::with_capacity(n);
        for id in &node_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateNode(id.clone()));
            }
        }
        let mut adjacency = vec![false; n * n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at node {i}")));
            }
            adjacency[i * n + j] = true;
            adjacency[j * n + i] = true;
        }
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[i * n + j]).collect())
            .collect();
        let n_edges = neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        Ok(Self {
            node_ids,
            adjacency,
            neighbors,
            n_edges,
        })
    }

    /// Builds from one flag per dyad in canonical order.
    pub fn from_dyad_flags(node_ids: Vec<String>, flags: &[bool]) -> Result<Self> {
        let n = node_ids.len();
        if flags.len() != n_dyads(n) {
            return Err(Error::DimensionMismatch {
                context: "dyad flags",
                expected: n_dyads(n),
                found: flags.len(),
            });
        }
        let edges = dyads(n).zip(flags).filter(|(_, &f)| f).map(|(d, _)| d);
        Self::from_edges(node_ids, edges)
    }

    /// Nodes labelled `"0"`, `"1"`, ...
    pub fn with_numbered_nodes(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        Self::from_edges((0..n).map(|i| i.to_string()).collect(), edges)
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n_nodes() + j]
    }

    /// Row `i` of the adjacency matrix.
    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        let n = self.n_nodes();
        &self.adjacency[i * n..(i + 1) * n]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_dyads(&self) -> usize {
        n_dyads(self.n_nodes())
    }

    /// Edge indicator per dyad in canonical order.
    pub fn dyad_flags(&self) -> Vec<bool> {
        dyads(self.n_nodes()).map(|(i, j)| self.has_edge(i, j)).collect()
    }

    /// Undirected edges `(i, j)`, `i < j`, in canonical order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        dyads(self.n_nodes())
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    /// Edge density `|E| / C(N, 2)`.
    pub fn density(&self) -> f64 {
        self.n_edges as f64 / self.n_dyads().max(1) as f64
    }
}

/// Per-node covariates aligned with [`Sociomatrix`] node order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCovariates {
    gender: Vec<String>,
    race: Vec<String>,
    grade: Vec<i32>,
    grade_range: (i32, i32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree_bin: Option<Vec<usize>>,
}

impl NodeCovariates {
    pub fn new(
        gender: Vec<String>,
        race: Vec<String>,
        grade: Vec<i32>,
        grade_range: (i32, i32),
    ) -> Result<Self> {
        let n = gender.len();
        for (what, len) in [("race", race.len()), ("grade", grade.len())] {
            if len != n {
                return Err(Error::InvalidInput(format!(
                    "{what} has {len} records but gender has {n}"
                )));
            }
        }
        if grade_range.0 > grade_range.1 {
            return Err(Error::InvalidInput(format!(
                "empty grade range {}..={}",
                grade_range.0, grade_range.1
            )));
        }
        if let Some((i, g)) = grade
            .iter()
            .enumerate()
            .find(|(_, &g)| g < grade_range.0 || g > grade_range.1)
        {
            return Err(Error::InvalidInput(format!(
                "grade {g} of node {i} outside {}..={}",
                grade_range.0, grade_range.1
            )));
        }
        Ok(Self {
            gender,
            race,
            grade,
            grade_range,
            degree_bin: None,
        })
    }

    pub fn len(&self) -> usize {
        self.gender.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gender.is_empty()
    }

    pub fn gender(&self) -> &[String] {
        &self.gender
    }

    pub fn race(&self) -> &[String] {
        &self.race
    }

    pub fn grade(&self) -> &[i32] {
        &self.grade
    }

    pub fn grade_range(&self) -> (i32, i32) {
        self.grade_range
    }

    pub fn degree_bin(&self) -> Option<&[usize]> {
        self.degree_bin.as_deref()
    }

    pub fn set_degree_bins(&mut self, bins: Vec<usize>) -> Result<()> {
        if bins.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "degree bins",
                expected: self.len(),
                found: bins.len(),
            });
        }
        self.degree_bin = Some(bins);
        Ok(())
    }

    /// Node labels for a named covariate (`gender`, `race`, `grade`, `degree`).
    pub fn labels(&self, covariate: &str) -> Option<Vec<String>> {
        match covariate {
            "gender" => Some(self.gender.clone()),
            "race" => Some(self.race.clone()),
            "grade" => Some(self.grade.iter().map(i32::to_string).collect()),
            "degree" | "degree_bin" => self
                .degree_bin
                .as_ref()
                .map(|b| b.iter().map(usize::to_string).collect()),
            _ => None,
        }
    }
}

/// Reads an edge list and covariate CSV from disk.
pub fn load_network(
    edge_file: impl AsRef<Path>,
    covariate_file: impl AsRef<Path>,
    symmetrization: Symmetrization,
) -> Result<(Sociomatrix, NodeCovariates)> {
    let (edge_file, covariate_file) = (edge_file.as_ref(), covariate_file.as_ref());
    let edges = File::open(edge_file).map_err(|e| Error::io(edge_file, e))?;
    let covs = File::open(covariate_file).map_err(|e| Error::io(covariate_file, e))?;
    read_network(
        BufReader::new(edges),
        covs,
        symmetrization,
        DEFAULT_GRADE_RANGE,
        &edge_file.display().to_string(),
        &covariate_file.display().to_string(),
    )
}

/// Reader-based loader behind [`load_network`]. `*_name` label diagnostics.
pub fn read_network(
    edges: impl BufRead,
    covariates: impl Read,
    symmetrization: Symmetrization,
    grade_range: (i32, i32),
    edge_name: &str,
    covariate_name: &str,
) -> Result<(Sociomatrix, NodeCovariates)> {
    let (ids, nodes) = read_covariates(covariates, grade_range, covariate_name)?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut nominations = HashSet::new();
    for (lineno, line) in edges.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(edge_name, e))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Malformed {
                file: edge_name.to_string(),
                line: lineno,
                message: format!("expected `src dst`, found {} fields", fields.len()),
            });
        }
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| Error::UnknownNode {
                id: id.to_string(),
                line: lineno,
            })
        };
        let (src, dst) = (lookup(fields[0])?, lookup(fields[1])?);
        if src != dst {
            nominations.insert((src, dst));
        }
    }

    let undirected: BTreeSet<(usize, usize)> = nominations
        .iter()
        .filter(|&&(s, d)| match symmetrization {
            Symmetrization::Union => true,
            Symmetrization::Mutual => nominations.contains(&(d, s)),
        })
        .map(|&(s, d)| (s.min(d), s.max(d)))
        .collect();

    let g = Sociomatrix::from_edges(ids, undirected)?;
    Ok((g, nodes))
}

fn read_covariates(
    input: impl Read,
    grade_range: (i32, i32),
    name: &str,
) -> Result<(Vec<String>, NodeCovariates)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let malformed = |line: usize, message: String| Error::Malformed {
        file: name.to_string(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let column = |field: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(field))
            .ok_or_else(|| malformed(1, format!("header lacks column `{field}`")))
    };
    let cols = [column("id")?, column("gender")?, column("race")?, column("grade")?];

    let (mut ids, mut gender, mut race, mut grade) = (vec![], vec![], vec![], vec![]);
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |c: usize| record.get(c).unwrap_or("");
        let id = get(cols[0]).to_string();
        if id.is_empty() {
            return Err(malformed(line, "empty node id".into()));
        }
        for (field, c) in [("gender", cols[1]), ("race", cols[2]), ("grade", cols[3])] {
            if get(c).is_empty() {
                return Err(Error::MissingValue {
                    id: id.clone(),
                    field: field.into(),
                });
            }
        }
        let g: i32 = get(cols[3])
            .parse()
            .map_err(|_| malformed(line, format!("grade `{}` is not an integer", get(cols[3]))))?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateNode(id));
        }
        gender.push(get(cols[1]).to_string());
        race.push(get(cols[2]).to_string());
        grade.push(g);
        ids.push(id);
    }
    let nodes = NodeCovariates::new(gender, race, grade, grade_range)?;
    Ok((ids, nodes))
}

/// Bin per node: the number of cutpoints strictly below its degree.
///
/// With the default `[3, 7]`: bin 0 for degree ≤ 3, bin 1 for 4–7, bin 2 for 8+.
pub fn compute_degree_bins(g: &Sociomatrix, cutpoints: &[usize]) -> Result<Vec<usize>> {
    if cutpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "degree cutpoints must be strictly increasing, got {cutpoints:?}"
        )));
    }
    Ok(g.degrees()
        .into_iter()
        .map(|d| cutpoints.iter().filter(|&&c| c < d).count())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DyadScheme {
    /// Intercept, shared gender, shared race, absolute grade difference.
    Basic,
    /// Intercept, shared gender, and one indicator per observed race pairing,
    /// grade pairing and degree-bin pairing.
    Expanded,
}

impl FromStr for DyadScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Self::Basic),
            "expanded" => Ok(Self::Expanded),
            other => Err(Error::InvalidInput(format!("unknown covariate scheme `{other}`"))),
        }
    }
}

/// Dyadic design matrix `x(i, j)`, one row per dyad in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DyadCovariates<T> {
    n_nodes: usize,
    columns: Vec<String>,
    families: Vec<String>,
    values: Vec<T>,
    notes: Vec<String>,
}

impl<T: Scalar> DyadCovariates<T> {
    /// Wraps a row-major `C(n, 2) × p` value array.
    pub fn from_rows(
        n_nodes: usize,
        columns: Vec<String>,
        families: Vec<String>,
        values: Vec<T>,
    ) -> Result<Self> {
        if families.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                context: "column families",
                expected: columns.len(),
                found: families.len(),
            });
        }
        let expected = n_dyads(n_nodes) * columns.len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "dyad covariate values",
                expected,
                found: values.len(),
            });
        }
        Ok(Self {
            n_nodes,
            columns,
            families,
            values,
            notes: Vec::new(),
        })
    }

    /// Intercept-only design.
    pub fn intercept_only(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            columns: vec!["intercept".into()],
            families: vec!["intercept".into()],
            values: vec![T::one(); n_dyads(n_nodes)],
            notes: Vec::new(),
        }
    }

    /// Design with no columns (pure blockmodel fits).
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            columns: Vec::new(),
            families: Vec::new(),
            values: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dyads(&self) -> usize {
        n_dyads(self.n_nodes)
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Covariate each column derives from (`gender`, `race`, `grade`, ...).
    pub fn families(&self) -> &[String] {
        &self.families
    }

    /// Provenance notes: dropped or reference-level columns.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    #[inline]
    pub fn row(&self, dyad: usize) -> &[T] {
        let p = self.columns.len();
        &self.values[dyad * p..(dyad + 1) * p]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = T> + '_ {
        let p = self.columns.len();
        self.values.iter().skip(c).step_by(p.max(1)).copied()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Columns named `name` exactly, or else all columns of family `name`.
    pub fn columns_for(&self, name: &str) -> Vec<usize> {
        if let Some(c) = self.column_index(name) {
            return vec![c];
        }
        (0..self.columns.len())
            .filter(|&c| self.families[c] == name)
            .collect()
    }

    /// Copy with the given columns removed.
    pub fn without_columns(&self, drop: &[usize]) -> Self {
        let keep: Vec<usize> = (0..self.n_columns()).filter(|c| !drop.contains(c)).collect();
        let values = (0..self.n_dyads())
            .flat_map(|d| {
                let row = self.row(d);
                keep.iter().map(move |&c| row[c])
            })
            .collect();
        Self {
            n_nodes: self.n_nodes,
            columns: keep.iter().map(|&c| self.columns[c].clone()).collect(),
            families: keep.iter().map(|&c| self.families[c].clone()).collect(),
            values,
            notes: self.notes.clone(),
        }
    }
}

/// Builds `x(i, j)` for every dyad under the given scheme.
///
/// The expanded scheme needs degree bins (see [`compute_degree_bins`]). Each
/// pairing family sums to one on every dyad, so its first observed pairing is
/// left out as the reference level absorbed by the intercept.
pub fn build_dyad_covariates<T: Scalar>(
    nodes: &NodeCovariates,
    scheme: DyadScheme,
) -> Result<DyadCovariates<T>> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "network needs at least two nodes".into(),
        ));
    }
    match scheme {
        DyadScheme::Basic => {
            let columns = ["intercept", "same_gender", "same_race", "grade_diff"];
            let families = ["intercept", "gender", "race", "grade"];
            let mut values = Vec::with_capacity(n_dyads(n) * 4);
            for (i, j) in dyads(n) {
                values.push(T::one());
                values.push(indicator(nodes.gender[i] == nodes.gender[j]));
                values.push(indicator(nodes.race[i] == nodes.race[j]));
                values.push(T::of_count(nodes.grade[i].abs_diff(nodes.grade[j]) as usize));
            }
            DyadCovariates::from_rows(
                n,
                columns.map(String::from).to_vec(),
                families.map(String::from).to_vec(),
                values,
            )
        }
        DyadScheme::Expanded => {
            let bins = nodes.degree_bin.as_deref().ok_or_else(|| {
                Error::InvalidInput("expanded scheme requires degree bins".into())
            })?;
            let mut notes = Vec::new();
            let race = PairingFamily::new(
                "race",
                &nodes.race,
                |a, b| format!("race[{a}|{b}]"),
                &mut notes,
            );
            let grade = PairingFamily::new(
                "grade",
                &nodes.grade,
                |a, b| format!("grade[{a}|{b}]"),
                &mut notes,
            );
            let degree = PairingFamily::new(
                "degree",
                bins,
                |a, b| format!("degree_bin[{a}|{b}]"),
                &mut notes,
            );

            let mut columns = vec!["intercept".to_string(), "same_gender".to_string()];
            let mut families = vec!["intercept".to_string(), "gender".to_string()];
            let offsets = [
                columns.len(),
                columns.len() + race.columns.len(),
                columns.len() + race.columns.len() + grade.columns.len(),
            ];
            for (family, names) in [
                (race.family, &race.columns),
                (grade.family, &grade.columns),
                (degree.family, &degree.columns),
            ] {
                columns.extend(names.iter().cloned());
                families.extend(std::iter::repeat_n(family.to_string(), names.len()));
            }
            let p = columns.len();
            let mut values = vec![T::zero(); n_dyads(n) * p];
            for (d, (i, j)) in dyads(n).enumerate() {
                let row = &mut values[d * p..(d + 1) * p];
                row[0] = T::one();
                row[1] = indicator(nodes.gender[i] == nodes.gender[j]);
                let hits = [
                    race.column_of(i, j).map(|c| offsets[0] + c),
                    grade.column_of(i, j).map(|c| offsets[1] + c),
                    degree.column_of(i, j).map(|c| offsets[2] + c),
                ];
                for c in hits.into_iter().flatten() {
                    row[c] = T::one();
                }
            }
            let mut x = DyadCovariates::from_rows(n, columns, families, values)?;
            x.notes = notes;
            Ok(x)
        }
    }
}

#[inline]
fn indicator<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// Indicator columns for the unordered level pairings of one node covariate.
struct PairingFamily<'a, L> {
    family: &'static str,
    levels: &'a [L],
    /// Observed pairings after the reference, with their column position.
    lookup: HashMap<(L, L), usize>,
    columns: Vec<String>,
}

impl<'a, L: Ord + Clone + std::hash::Hash + fmt::Display> PairingFamily<'a, L> {
    fn new(
        family: &'static str,
        levels: &'a [L],
        name: impl Fn(&L, &L) -> String,
        notes: &mut Vec<String>,
    ) -> Self {
        let n = levels.len();
        let observed: BTreeSet<(L, L)> = dyads(n).map(|(i, j)| ordered(&levels[i], &levels[j])).collect();
        let distinct: BTreeSet<&L> = levels.iter().collect();
        for (ai, a) in distinct.iter().enumerate() {
            for b in distinct.iter().skip(ai) {
                let pair = ((*a).clone(), (*b).clone());
                if !observed.contains(&pair) {
                    notes.push(format!("{} dropped: no dyads", name(a, b)));
                }
            }
        }
        let mut iter = observed.into_iter();
        if let Some((a, b)) = iter.next() {
            notes.push(format!("{} is the reference level", name(&a, &b)));
        }
        let mut lookup = HashMap::new();
        let mut columns = Vec::new();
        for (c, (a, b)) in iter.enumerate() {
            columns.push(name(&a, &b));
            lookup.insert((a, b), c);
        }
        Self {
            family,
            levels,
            lookup,
            columns,
        }
    }

    fn column_of(&self, i: usize, j: usize) -> Option<usize> {
        self.lookup.get(&ordered(&self.levels[i], &self.levels[j])).copied()
    }
}

fn ordered<L: Ord + Clone>(a: &L, b: &L) -> (L, L) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}
