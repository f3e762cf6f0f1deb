//! Structural primitives shared by the encoder and the intervention solver:
//! symmetric-normalized adjacency, graph Laplacian, and the degree marginals
//! the transport solver constrains against.

use crate::graph::{adjacency_from_edges, degrees_from_edges, Graph};
use crate::linalg::CsrMatrix;

/// Precomputed spectral/structural matrices of a graph.
///
/// `degree_out` / `degree_in` are the node degrees normalized to sum 1 (a
/// probability marginal — the transport plans in [`crate::intervene`] carry
/// unit total mass). For an undirected graph the two are equal; both are kept
/// so the solver reads as row/column marginals. An edgeless graph has no mass
/// to distribute and gets all-zero marginals.
#[derive(Debug, Clone)]
pub struct SpectralPrimitives {
    pub normalized_adjacency: CsrMatrix,
    pub laplacian: CsrMatrix,
    pub degree_out: Vec<f64>,
    pub degree_in: Vec<f64>,
}

/// Computes all primitives for `g`.
pub fn spectral_primitives(g: &Graph) -> SpectralPrimitives {
    let n = g.num_nodes();
    let edges = g.edges();
    let deg = degrees_from_edges(n, edges);

    let normalized_adjacency = normalized_adjacency(n, edges);

    // L = D − A
    let mut lap = Vec::with_capacity(edges.len() * 2 + n);
    for i in 0..n {
        if deg[i] != 0.0 {
            lap.push((i as u32, i as u32, deg[i]));
        }
    }
    for &(u, v) in edges {
        lap.push((u, v, -1.0));
        lap.push((v, u, -1.0));
    }
    let laplacian = CsrMatrix::from_triplets(n, n, lap).expect("validated edge list");

    let total: f64 = deg.iter().sum();
    let marginal: Vec<f64> = if total > 0.0 {
        deg.iter().map(|d| d / total).collect()
    } else {
        deg.clone()
    };

    SpectralPrimitives {
        normalized_adjacency,
        laplacian,
        degree_out: marginal.clone(),
        degree_in: marginal,
    }
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` — the propagation matrix of the encoder.
/// The self-loop keeps isolated nodes well-defined (row reduces to `[1]`).
pub fn normalized_adjacency(n: usize, edges: &[(u32, u32)]) -> CsrMatrix {
    let mut deg_hat = degrees_from_edges(n, edges);
    for d in &mut deg_hat {
        *d += 1.0;
    }
    let inv_sqrt: Vec<f64> = deg_hat.iter().map(|d| 1.0 / d.sqrt()).collect();

    let adj = adjacency_from_edges(n, edges);
    let mut triplets = Vec::with_capacity(adj.nnz() + n);
    for i in 0..n {
        let (cols, _) = adj.row(i);
        for &j in cols {
            triplets.push((i as u32, j, inv_sqrt[i] * inv_sqrt[j as usize]));
        }
        triplets.push((i as u32, i as u32, inv_sqrt[i] * inv_sqrt[i]));
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("adjacency has no duplicate entries")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use ndarray::{Array1, Array2};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn graph(n: usize, edges: Vec<(u32, u32)>) -> Graph {
        let f = CsrMatrix::from_triplets(n, 1, (0..n).map(|i| (i as u32, 0, 1.0))).unwrap();
        Graph::new("fixture", n, edges, f, None, None, None).unwrap()
    }

    #[test]
    fn single_edge_laplacian() {
        let p = spectral_primitives(&graph(2, vec![(0, 1)]));
        let l = p.laplacian.to_dense();
        assert_eq!(l, ndarray::array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn path_normalized_adjacency_matches_dense_formula() {
        let g = graph(3, vec![(0, 1), (1, 2)]);
        let got = spectral_primitives(&g).normalized_adjacency.to_dense();

        // Independent dense computation of D̂^{-1/2}(A+I)D̂^{-1/2}.
        let mut a_hat: Array2<f64> = Array2::eye(3);
        for &(u, v) in g.edges() {
            a_hat[[u as usize, v as usize]] = 1.0;
            a_hat[[v as usize, u as usize]] = 1.0;
        }
        let d: Array1<f64> = a_hat.sum_axis(ndarray::Axis(1));
        let mut want = a_hat.clone();
        for i in 0..3 {
            for j in 0..3 {
                want[[i, j]] /= (d[i] * d[j]).sqrt();
            }
        }
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12, "got {g}, want {w}");
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        for edges in [vec![(0, 1), (1, 2), (2, 3), (0, 3)], vec![(0, 2)], vec![]] {
            let p = spectral_primitives(&graph(4, edges));
            let l = p.laplacian.to_dense();
            for i in 0..4 {
                let row_sum: f64 = l.row(i).sum();
                assert!(row_sum.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn laplacian_is_positive_semidefinite() {
        let p = spectral_primitives(&graph(5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]));
        let l = p.laplacian.to_dense();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = Array1::from_iter((0..5).map(|_| rng.gen_range(-1.0..1.0)));
            let quad = x.dot(&l.dot(&x));
            assert!(quad >= -1e-8, "x^T L x = {quad}");
        }
    }

    #[test]
    fn normalized_adjacency_symmetric_unit_range() {
        let p = spectral_primitives(&graph(4, vec![(0, 1), (1, 2), (2, 3)]));
        let a = p.normalized_adjacency.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[[i, j]], a[[j, i]]);
                assert!((0.0..=1.0).contains(&a[[i, j]]));
            }
        }
    }

    #[test]
    fn degree_marginals_sum_to_one_and_match() {
        let p = spectral_primitives(&graph(3, vec![(0, 1), (1, 2)]));
        assert_eq!(p.degree_out, p.degree_in);
        let total: f64 = p.degree_out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(p.degree_out, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn isolated_node_gets_identity_row() {
        let p = spectral_primitives(&graph(3, vec![(0, 1)]));
        let a = p.normalized_adjacency.to_dense();
        assert_eq!(a[[2, 2]], 1.0);
        assert_eq!(a[[2, 0]], 0.0);
        assert_eq!(p.degree_out[2], 0.0);
    }

    #[test]
    fn edgeless_graph_marginals_are_zero() {
        let p = spectral_primitives(&graph(2, vec![]));
        assert_eq!(p.degree_out, vec![0.0, 0.0]);
        assert_eq!(p.normalized_adjacency.to_dense(), Array2::<f64>::eye(2));
    }
}
