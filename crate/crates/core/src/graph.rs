//! Undirected simple graphs with a marked target node.
//!
//! Nodes are 0-based. Every graph built here is validated to be simple
//! (no self-loops, no repeated pairs) and connected.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Family a graph was built from. Used to pick the noiseless optimal coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Complete,
    Star { central_target: bool },
    Generic,
}

/// Where the target sits on a star graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Central,
    External,
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" => Ok(TargetKind::Central),
            "external" => Ok(TargetKind::External),
            other => Err(Error::Parameter(format!("unknown star target kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    target: usize,
    family: Family,
}

impl Graph {
    /// Builds a graph from an explicit edge list.
    ///
    /// Pairs are normalised to `(min, max)` and kept in input order; that
    /// order is the link enumeration used by the noise model.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], target: usize) -> Result<Self> {
        Self::with_family(n, edges, target, Family::Generic)
    }

    fn with_family(n: usize, edges: &[(usize, usize)], target: usize, family: Family) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidOrder { n, min: 2 });
        }
        if target >= n {
            return Err(Error::InvalidGraph(format!("target {target} not in [0, {n})")));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalised = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            let pair = (i.min(j), i.max(j));
            if !seen.insert(pair) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", pair.0, pair.1)));
            }
            normalised.push(pair);
        }
        let g = Graph {
            n,
            edges: normalised,
            target,
            family,
        };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Complete graph `K_n` with target node 0.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidOrder { n, min: 2 });
        }
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::with_family(n, &edges, 0, Family::Complete)
    }

    /// Star graph with node 0 as hub and `n − 1` leaves.
    ///
    /// An external target is placed on node 1; all leaves are equivalent.
    pub fn star(n: usize, kind: TargetKind) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidOrder { n, min: 3 });
        }
        let edges: Vec<_> = (1..n).map(|j| (0, j)).collect();
        let (target, central_target) = match kind {
            TargetKind::Central => (0, true),
            TargetKind::External => (1, false),
        };
        Self::with_family(n, &edges, target, Family::Star { central_target })
    }

    /// Moves the target. Star graphs lose their family tag if the new target
    /// changes its role (hub vs leaf).
    pub fn with_target(mut self, target: usize) -> Result<Self> {
        if target >= self.n {
            return Err(Error::InvalidGraph(format!("target {target} not in [0, {})", self.n)));
        }
        self.target = target;
        if let Family::Star { .. } = self.family {
            self.family = Family::Star {
                central_target: target == 0,
            };
        }
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn link_count(&self) -> usize {
        self.edges.len()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        let deg: Vec<f64> = self.degrees().into_iter().map(|d| d as f64).collect();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(deg))
    }

    /// `L = D − A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.weighted_laplacian(|_| 1.0)
    }

    /// Laplacian with per-link weights `weight(link_index)`; the unweighted
    /// Laplacian is `weight ≡ 1`.
    pub fn weighted_laplacian(&self, weight: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        self.weighted_laplacian_into(weight, &mut l);
        l
    }

    /// Writes the weighted Laplacian into `l`, which must be `n × n`.
    pub fn weighted_laplacian_into(&self, weight: impl Fn(usize) -> f64, l: &mut DMatrix<f64>) {
        let n = self.n;
        assert_eq!(l.shape(), (n, n));
        let m = l.as_mut_slice();
        m.fill(0.0);
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            let w = weight(k);
            m[i + j * n] -= w;
            m[j + i * n] -= w;
            m[i * (n + 1)] += w;
            m[j * (n + 1)] += w;
        }
    }

    fn is_connected(&self) -> bool {
        let mut neighbours = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            neighbours[i].push(j);
            neighbours[j].push(i);
        }
        let mut visited = vec![false; self.n];
        let mut stack = vec![0];
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &neighbours[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Parses the edge-list text format: a header line `n target`, then one
    /// `i j` pair per line (0-based). Blank lines and `#` comments are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line_no, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `n target` header".into(),
        })?;
        let [n, target] = parse_pair(line_no, header)?;

        let mut edges = Vec::new();
        for (line_no, line) in lines {
            let [i, j] = parse_pair(line_no, line)?;
            edges.push((i, j));
        }
        Self::from_edges(n, &edges, target)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.target);
        for &(i, j) in &self.edges {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }
}

fn parse_pair(line: usize, text: &str) -> Result<[usize; 2]> {
    let fields: Vec<_> = text.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::Parse {
            line,
            msg: format!("expected two integers, got `{text}`"),
        });
    }
    let parse = |s: &str| {
        s.parse::<usize>().map_err(|e| Error::Parse {
            line,
            msg: format!("`{s}`: {e}"),
        })
    };
    Ok([parse(fields[0])?, parse(fields[1])?])
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.family {
            Family::Complete => "complete",
            Family::Star { central_target: true } => "star-central",
            Family::Star { central_target: false } => "star-external",
            Family::Generic => "edge-list",
        };
        write!(
            f,
            "{kind}(n={}, links={}, target={})",
            self.n,
            self.edges.len(),
            self.target
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn complete_three_laplacian() {
        let l = Graph::complete(3).unwrap().laplacian();
        let expected = DMatrix::from_row_slice(3, 3, &[2., -1., -1., -1., 2., -1., -1., -1., 2.]);
        assert_eq!(l, expected);
    }

    #[test]
    fn complete_edge_count() {
        assert_eq!(Graph::complete(10).unwrap().link_count(), 45);
    }

    #[test]
    fn order_errors() {
        assert!(matches!(Graph::complete(1), Err(Error::InvalidOrder { n: 1, .. })));
        assert!(matches!(
            Graph::star(2, TargetKind::Central),
            Err(Error::InvalidOrder { .. })
        ));
    }

    #[test]
    fn star_three_laplacian() {
        let l = Graph::star(3, TargetKind::Central).unwrap().laplacian();
        let expected = DMatrix::from_row_slice(3, 3, &[2., -1., -1., -1., 1., 0., -1., 0., 1.]);
        assert_eq!(l, expected);
    }

    #[test]
    fn star_degrees_and_target() {
        let g = Graph::star(10, TargetKind::Central).unwrap();
        let deg = g.degrees();
        assert_eq!(deg[0], 9);
        assert!(deg[1..].iter().all(|&d| d == 1));

        let g = Graph::star(5, TargetKind::External).unwrap();
        assert_eq!(g.target(), 1);
        assert_eq!(g.degrees()[g.target()], 1);
    }

    #[test]
    fn known_spectra() {
        let ev = sorted_eigenvalues(Graph::complete(4).unwrap().laplacian());
        for (a, b) in ev.iter().zip([0.0, 4.0, 4.0, 4.0]) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
        let ev = sorted_eigenvalues(Graph::star(4, TargetKind::Central).unwrap().laplacian());
        for (a, b) in ev.iter().zip([0.0, 1.0, 1.0, 4.0]) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn laplacian_is_degree_minus_adjacency() {
        let g = Graph::star(7, TargetKind::External).unwrap();
        assert_eq!(g.laplacian(), g.degree_matrix() - g.adjacency());
    }

    #[test]
    fn rejects_malformed_edge_sets() {
        assert!(Graph::from_edges(3, &[(0, 0), (0, 1), (1, 2)], 0).is_err());
        assert!(Graph::from_edges(3, &[(0, 1), (1, 0), (1, 2)], 0).is_err());
        assert!(Graph::from_edges(3, &[(0, 3)], 0).is_err());
        assert!(Graph::from_edges(4, &[(0, 1), (2, 3)], 0).is_err());
        assert!(Graph::from_edges(3, &[(0, 1), (1, 2)], 5).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# path\n4 2\n0 1\n1 2\n\n2 3 # tail\n";
        let g = Graph::parse_edge_list(text).unwrap();
        assert_eq!(g.order(), 4);
        assert_eq!(g.target(), 2);
        assert_eq!(g.edges(), &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(Graph::parse_edge_list(&g.to_edge_list()).unwrap(), g);
    }

    #[test]
    fn edge_list_reports_line() {
        let err = Graph::parse_edge_list("3 0\n0 1\n1 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn retarget_star() {
        let g = Graph::star(5, TargetKind::Central).unwrap().with_target(3).unwrap();
        assert_eq!(g.family(), Family::Star { central_target: false });
    }
}
