//! Strongly connected components of the digraph induced by a square matrix.
//!
//! The digraph has an edge `j -> i` whenever entry `(i, j)` is positive, which is
//! the convention used for infection matrices (column `j` infects row `i`).

use nalgebra::DMatrix;

/// Adjacency lists `succ[j]` = vertices `i` with `m[(i, j)] > 0`.
fn successors(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut succ = vec![Vec::new(); n];
    for j in 0..n {
        for i in 0..n {
            if m[(i, j)] > 0.0 {
                succ[j].push(i);
            }
        }
    }
    succ
}

/// Tarjan's algorithm, iterative so deep graphs cannot overflow the stack.
/// Components are returned in reverse topological order, vertices sorted.
pub fn strongly_connected_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    assert!(m.is_square(), "adjacency matrix must be square");
    let n = m.nrows();
    let succ = successors(m);

    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::with_capacity(n);
    let mut components = Vec::new();
    let mut next_index = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (vertex, position in its successor list)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
            }
        }
    }
    components
}

/// True iff the induced digraph is strongly connected (a 0x0 matrix is not).
pub fn is_strongly_connected(m: &DMatrix<f64>) -> bool {
    m.nrows() > 0 && strongly_connected_components(m).len() == 1
}
