//! Random finite lattices and skew topologies obtained by table search.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::hilbert::{cayley, OperatorSpec};
use crate::order::{order_closure, validate_skew, Elem, SkewTopology};
use crate::sheaves::Diagram;
use crate::{qi, QMatrix};

fn labels(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match i {
            0 => "0".to_string(),
            i if i == n - 1 => "1".to_string(),
            i => format!("e{i}"),
        })
        .collect()
}

/// A random bounded lattice on `n ≥ 2` elements with default tables.
pub fn random_lattice<R: Rng>(rng: &mut R, n: usize) -> SkewTopology {
    assert!(n >= 2, "a bounded lattice needs 0 and 1");
    loop {
        let mut pairs: Vec<(usize, usize)> = (1..n - 1).flat_map(|i| [(0, i), (i, n - 1)]).collect();
        pairs.push((0, n - 1));
        let density = rng.gen_range(0.15..0.6);
        for i in 1..n - 1 {
            for j in i + 1..n - 1 {
                if rng.gen_bool(density) {
                    pairs.push((i, j));
                }
            }
        }
        let leq = order_closure(n, &pairs);
        if let Ok(t) = SkewTopology::from_leq(labels(n), leq, None, None) {
            return t;
        }
    }
}

/// Starts from a random lattice and perturbs single `∧` entries, keeping each
/// change only when axioms (i)-(iv) still hold.
pub fn random_skew<R: Rng>(rng: &mut R, n: usize, attempts: usize) -> SkewTopology {
    let mut t = random_lattice(rng, n);
    let inner: Vec<Elem> = t.elems().filter(|&e| e != t.bottom() && e != t.top()).collect();
    if inner.is_empty() {
        return t;
    }
    for _ in 0..attempts {
        let x = *inner.choose(rng).unwrap();
        let y = *inner.choose(rng).unwrap();
        let below: Vec<Elem> = t.elems().filter(|&z| t.leq(z, x) && t.leq(z, y)).collect();
        let z = *below.choose(rng).unwrap();
        let mut meet = t.meet_table();
        meet[x.0][y.0] = z.0;
        let Ok(candidate) = SkewTopology::new(t.labels().to_vec(), t.leq_matrix(), meet, t.join_table()) else {
            continue;
        };
        if validate_skew(&candidate, false).is_skew() {
            t = candidate;
        }
    }
    t
}

/// A diagram on `2..=max_nodes` nodes shaped as a tree rooted at the last
/// node, so every composite is path-independent. Dimensions lie in
/// `0..=max_dim`; entries in `-2..=2`.
pub fn random_tree_diagram<R: Rng>(rng: &mut R, max_nodes: usize, max_dim: usize) -> Diagram {
    let k = rng.gen_range(2..=max_nodes.max(2));
    let dims: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=max_dim)).collect();
    let arrows = (0..k - 1)
        .map(|i| {
            let parent = rng.gen_range(i + 1..k);
            let f = QMatrix::from_fn(dims[parent], dims[i], |_, _| qi(rng.gen_range(-2..=2)));
            (i, parent, f)
        })
        .collect();
    Diagram { dims, arrows }
}

/// `Q·D·Qᵀ` with integer eigenvalues in `-3..=3` and `Q` the Cayley transform
/// of a random skew matrix. Returns the matrix and its eigenvalues.
pub fn random_operator<R: Rng>(rng: &mut R, dim: usize) -> (QMatrix, Vec<i64>) {
    let values: Vec<i64> = (0..dim).map(|_| rng.gen_range(-3..=3)).collect();
    let mut skew = QMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in r + 1..dim {
            let v = rng.gen_range(-2..=2);
            skew.set(r, c, qi(v));
            skew.set(c, r, qi(-v));
        }
    }
    let orthogonal = cayley(&skew).expect("I + S is invertible for skew S");
    let op = OperatorSpec::conjugated(&values.iter().map(|&v| qi(v)).collect::<Vec<_>>(), &orthogonal)
        .expect("conjugated diagonal operators have the given spectrum");
    (op.matrix, values)
}
