//! Graph data model, normalized operators, homophily index, and synthetic
//! generators for desk-scale experiments.

use crate::error::{Error, Result};
use crate::kernels::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A weighted graph. Undirected graphs store each edge once; operators
/// symmetrize on demand.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    directed: bool,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, directed: bool) -> Result<Self> {
        for &(u, v, w) in &edges {
            if u >= n || v >= n {
                return Err(Error::Contract(format!(
                    "edge ({u},{v}) out of range for {n} nodes"
                )));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Contract(format!(
                    "edge ({u},{v}) has invalid weight {w}; weights must be finite and > 0"
                )));
            }
        }
        Ok(Graph { n, edges, directed })
    }

    /// Unweighted undirected graph from an edge list.
    pub fn undirected(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Graph::new(n, edges.iter().map(|&(u, v)| (u, v, 1.0)).collect(), false)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    /// Dense adjacency; symmetric for undirected graphs.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(u, v, w) in &self.edges {
            a[(u, v)] += w;
            if !self.directed && u != v {
                a[(v, u)] += w;
            }
        }
        a
    }
}

/// Normalized graph operators.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    /// Normalized adjacency (self-loop free unless requested).
    pub adj_norm: Matrix,
    /// I - adj_norm.
    pub laplacian_norm: Matrix,
    /// Degrees of the (possibly self-looped) adjacency used for scaling.
    pub degree: Vec<f64>,
}

/// Degree-normalized adjacency.
///
/// Undirected: D^{-1/2} (A [+ I]) D^{-1/2}. Directed: the generalization
/// D_out^{-1/2} (A [+ I]) D_in^{-1/2}, which reduces to the symmetric form
/// when the graph is undirected.
///
/// A zero degree makes the scaling undefined, so an isolated node is a
/// hard error when `self_loops` is false; with self-loops the node gets
/// adj_norm[ii] = 1.
pub fn normalized_adjacency(g: &Graph, self_loops: bool) -> Result<Matrix> {
    let n = g.n();
    let mut a = g.adjacency();
    if self_loops {
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
    }
    let mut d_out = vec![0.0; n];
    let mut d_in = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            d_out[i] += a[(i, j)];
            d_in[j] += a[(i, j)];
        }
    }
    for i in 0..n {
        if d_out[i] <= 0.0 || d_in[i] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "node {i} has zero degree; normalization is undefined (enable self_loops or connect the node)"
            )));
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                out[(i, j)] = a[(i, j)] / (d_out[i].sqrt() * d_in[j].sqrt());
            }
        }
    }
    if !g.directed() {
        // d_in == d_out, but enforce exact symmetry of the stored matrix.
        out.symmetrize();
    }
    Ok(out)
}

pub fn operators(g: &Graph, self_loops: bool) -> Result<GraphOperators> {
    let adj_norm = normalized_adjacency(g, self_loops)?;
    let n = g.n();
    let mut laplacian_norm = adj_norm.scale(-1.0);
    for i in 0..n {
        laplacian_norm[(i, i)] += 1.0;
    }
    let mut a = g.adjacency();
    if self_loops {
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
    }
    let degree = (0..n).map(|i| a.row(i).iter().sum()).collect();
    Ok(GraphOperators { adj_norm, laplacian_norm, degree })
}

/// Fraction of edges whose endpoints share a label.
pub fn homophily_index(g: &Graph, labels: &[usize]) -> Result<f64> {
    if labels.len() != g.n() {
        return Err(Error::Contract(format!(
            "labels length {} does not match node count {}",
            labels.len(),
            g.n()
        )));
    }
    if g.edges().is_empty() {
        return Err(Error::Degenerate("homophily index undefined on an empty edge set".into()));
    }
    let same = g.edges().iter().filter(|&&(u, v, _)| labels[u] == labels[v]).count();
    Ok(same as f64 / g.edges().len() as f64)
}

/// Stochastic block model: undirected simple graph with `blocks` near-equal
/// communities, intra-block edge probability `p_in`, inter-block `p_out`.
/// Deterministic for a fixed rng state. Returns the graph and block labels.
pub fn sbm_generate(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Graph, Vec<usize>)> {
    if blocks == 0 || n < blocks {
        return Err(Error::Contract(format!("need at least one node per block, got n={n}, blocks={blocks}")));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Contract(format!("{name} must lie in [0,1], got {p}")));
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| i * blocks / n).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    Ok((Graph::new(n, edges, false)?, labels))
}

/// Path graph on n nodes: 0-1-2-...-(n-1), unweighted, undirected.
pub fn chain_graph(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Contract(format!("chain graph needs at least 2 nodes, got {n}")));
    }
    Graph::undirected(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{eig_symmetric, Matrix};
    use crate::rng::stream;

    #[test]
    fn single_edge_normalization() {
        let g = Graph::undirected(2, &[(0, 1)]).unwrap();
        let a = normalized_adjacency(&g, false).unwrap();
        assert_eq!(a.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn triangle_spectrum_matches_direct_eigendecomposition() {
        let g = Graph::undirected(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let a = normalized_adjacency(&g, false).unwrap();
        // K3 normalized adjacency is (J - I)/2
        let expected = Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.5 });
        assert!(a.sub(&expected).max_abs() < 1e-14);
        let (vals, _) = eig_symmetric(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-10);
        assert!((vals[1] + 0.5).abs() < 1e-10);
        assert!((vals[2] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn path3_spectrum_is_closed_form() {
        let g = chain_graph(3).unwrap();
        let a = normalized_adjacency(&g, false).unwrap();
        let (vals, _) = eig_symmetric(&a).unwrap();
        for (got, want) in vals.iter().zip([1.0, 0.0, -1.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn isolated_node_errors_without_self_loops() {
        let g = Graph::undirected(3, &[(0, 1)]).unwrap();
        assert!(matches!(normalized_adjacency(&g, false), Err(Error::Degenerate(_))));
        let a = normalized_adjacency(&g, true).unwrap();
        assert!((a[(2, 2)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn homophily_trivial_cases() {
        let g = Graph::undirected(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(homophily_index(&g, &[0, 0, 0, 0]).unwrap(), 1.0);
        // bipartite path with sides as labels
        assert_eq!(homophily_index(&g, &[0, 1, 0, 1]).unwrap(), 0.0);
        let empty = Graph::undirected(2, &[]).unwrap();
        assert!(homophily_index(&empty, &[0, 1]).is_err());
    }

    #[test]
    fn homophily_matches_enumeration_on_sbm() {
        let mut rng = stream(42, "sbm");
        let (g, labels) = sbm_generate(60, 2, 0.2, 0.05, &mut rng).unwrap();
        let counted = g
            .edges()
            .iter()
            .filter(|&&(u, v, _)| labels[u] == labels[v])
            .count() as f64
            / g.edges().len() as f64;
        assert_eq!(homophily_index(&g, &labels).unwrap(), counted);
    }

    #[test]
    fn homophily_invariant_under_label_permutation() {
        let mut rng = stream(43, "sbm");
        let (g, labels) = sbm_generate(50, 3, 0.3, 0.1, &mut rng).unwrap();
        let permuted: Vec<usize> = labels.iter().map(|&c| (c + 1) % 3).collect();
        assert_eq!(
            homophily_index(&g, &labels).unwrap(),
            homophily_index(&g, &permuted).unwrap()
        );
    }

    #[test]
    fn sbm_extremes_give_disjoint_cliques() {
        let mut rng = stream(1, "sbm");
        let (g, labels) = sbm_generate(20, 2, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(g.edges().len(), 2 * (10 * 9 / 2));
        for &(u, v, _) in g.edges() {
            assert_eq!(labels[u], labels[v]);
        }
    }

    #[test]
    fn sbm_uniform_probability_matches_binomial_oracle() {
        // p_in == p_out: expected homophily is 1/blocks; check within 3 sigma
        let mut rng = stream(9, "sbm");
        let (g, labels) = sbm_generate(120, 2, 0.15, 0.15, &mut rng).unwrap();
        let h = homophily_index(&g, &labels).unwrap();
        let m = g.edges().len() as f64;
        // P(same block | edge) for two equal blocks of 60: 2*C(60,2) / C(120,2)
        let p = 59.0 / 119.0;
        let sigma = (p * (1.0 - p) / m).sqrt();
        assert!((h - p).abs() < 3.0 * sigma, "h={h}, expected {p} +- {}", 3.0 * sigma);
    }

    #[test]
    fn sbm_is_deterministic_per_seed() {
        let (g1, l1) = sbm_generate(40, 2, 0.2, 0.05, &mut stream(5, "sbm")).unwrap();
        let (g2, l2) = sbm_generate(40, 2, 0.2, 0.05, &mut stream(5, "sbm")).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        assert_eq!(l1, l2);
    }

    #[test]
    fn chain_graph_structure() {
        let g = chain_graph(2).unwrap();
        assert_eq!(g.edges().len(), 1);
        let g = chain_graph(100).unwrap();
        assert_eq!(g.edges().len(), 99);
        let a = g.adjacency();
        let degs: Vec<f64> = (0..100).map(|i| a.row(i).iter().sum()).collect();
        assert_eq!(degs.iter().filter(|&&d| d == 1.0).count(), 2);
        assert_eq!(degs.iter().filter(|&&d| d == 2.0).count(), 98);
    }

    #[test]
    fn chain_adjacency_spectrum_is_2cos() {
        let n = 12;
        let g = chain_graph(n).unwrap();
        let (vals, _) = eig_symmetric(&g.adjacency()).unwrap();
        let mut expected: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
            .collect();
        expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in vals.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn directed_normalization_uses_out_in_scaling() {
        // 0 -> 1, 0 -> 2: d_out(0)=2, d_in(1)=d_in(2)=1
        let g = Graph::new(3, vec![(0, 1, 1.0), (0, 2, 1.0)], true).unwrap();
        // nodes 1,2 have no out-edges; without self-loops that is degenerate
        assert!(normalized_adjacency(&g, false).is_err());
        let a = normalized_adjacency(&g, true).unwrap();
        // A+I: row 0 = [1,1,1], d_out(0)=3, d_in(1)=2
        assert!((a[(0, 1)] - 1.0 / (3.0_f64.sqrt() * 2.0_f64.sqrt())).abs() < 1e-12);
        assert!((a[(1, 0)]).abs() < 1e-12);
    }
}
