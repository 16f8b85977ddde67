use super::{Graph, GraphError, ParamStore, Var};

/// Worst-case agreement between analytic and numeric gradients for one
/// parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    /// `max|a - n| / max(max|a|, max|n|)` over the block.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn worst(&self) -> Option<&BlockReport> {
        self.blocks.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

type Builder<'a> = dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var, GraphError> + 'a;

/// Gradients from one backward pass, per parameter tensor.
pub fn analytic_gradients(store: &mut ParamStore<f64>, build: &Builder<'_>) -> Result<Vec<Vec<f64>>, GraphError> {
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    g.backward(loss, store)?;
    Ok(store.tensors().iter().map(|p| p.grad.clone()).collect())
}

/// Central differences with step `h`, one parameter element at a time.
pub fn numeric_gradients(store: &mut ParamStore<f64>, build: &Builder<'_>, h: f64) -> Result<Vec<Vec<f64>>, GraphError> {
    let eval = |s: &ParamStore<f64>| -> Result<f64, GraphError> {
        let mut g = Graph::new();
        let loss = build(&mut g, s)?;
        Ok(g.value(loss).item())
    };
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).data.len();
        let mut grads = Vec::with_capacity(n);
        for i in 0..n {
            let orig = store.get(id).data[i];
            store.get_mut(id).data[i] = orig + h;
            let fp = eval(store)?;
            store.get_mut(id).data[i] = orig - h;
            let fm = eval(store)?;
            store.get_mut(id).data[i] = orig;
            grads.push((fp - fm) / (2.0 * h));
        }
        out.push(grads);
    }
    Ok(out)
}

/// Fraction of the largest gradient in the graph below which a block's
/// own scale no longer sets the denominator.
pub const BLOCK_SCALE_FLOOR: f64 = 1e-2;

/// Per-block relative error: the largest absolute difference over the
/// larger of the block's own peak gradient and `BLOCK_SCALE_FLOOR` times
/// the peak over all blocks.
pub fn compare_gradients(names: &[String], analytic: &[Vec<f64>], numeric: &[Vec<f64>], tolerance: f64) -> GradCheckReport {
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let global = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(max_abs(v)));
    let blocks = names
        .iter()
        .zip(analytic.iter().zip(numeric))
        .map(|(name, (a, n))| {
            let diff = a.iter().zip(n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            let scale = max_abs(a).max(max_abs(n)).max(BLOCK_SCALE_FLOOR * global).max(1e-12);
            let rel = if diff == 0.0 { 0.0 } else { diff / scale };
            BlockReport {
                name: name.clone(),
                max_rel_error: rel,
                max_abs_error: diff,
                passed: rel < tolerance && rel.is_finite(),
            }
        })
        .collect();
    GradCheckReport { tolerance, blocks }
}

/// Compares backward against central differences (step `h`) for every
/// parameter tensor of `store`.
pub fn grad_check(
    store: &mut ParamStore<f64>,
    build: &Builder<'_>,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport, GraphError> {
    let analytic = analytic_gradients(store, build)?;
    let numeric = numeric_gradients(store, build, h)?;
    let names: Vec<String> = store.tensors().iter().map(|p| p.name.clone()).collect();
    Ok(compare_gradients(&names, &analytic, &numeric, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Tensor;

    fn linear_store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", &[3, 2], vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        s.add("b", &[2], vec![0.05, -0.05]);
        s
    }

    fn linear(g: &mut Graph<f64>, s: &ParamStore<f64>) -> Result<Var, GraphError> {
        let x = g.input(Tensor::from_vec(2, 3, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]));
        let w = g.param(s, s.id("w").unwrap());
        let b = g.param(s, s.id("b").unwrap());
        let y = g.dense(x, w, Some(b))?;
        Ok(g.sum(y))
    }

    #[test]
    fn linear_graph_passes_tightly() {
        let mut s = linear_store();
        let r = grad_check(&mut s, &linear, 1e-5, 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.blocks.len(), 2);
    }

    #[test]
    fn doubled_backward_is_reported() {
        let mut s = linear_store();
        let mut analytic = analytic_gradients(&mut s, &linear).unwrap();
        for block in &mut analytic {
            block.iter_mut().for_each(|g| *g *= 2.0);
        }
        let numeric = numeric_gradients(&mut s, &linear, 1e-5).unwrap();
        let names = vec!["w".to_string(), "b".to_string()];
        let r = compare_gradients(&names, &analytic, &numeric, 1e-4);
        assert!(!r.passed());
        assert!(r.blocks.iter().all(|b| !b.passed && (b.max_rel_error - 0.5).abs() < 1e-6));
    }

    #[test]
    fn small_blocks_use_the_floored_scale() {
        let names = vec!["big".to_string(), "small".to_string()];
        let numeric = vec![vec![1.0, -0.5], vec![1e-6, 0.0]];
        let noisy = vec![vec![1.0, -0.5], vec![1e-6 + 5e-10, 0.0]];
        assert!(compare_gradients(&names, &noisy, &numeric, 1e-4).passed());
        let wrong = vec![vec![1.0, -0.5], vec![-1e-6, 0.0]];
        let r = compare_gradients(&names, &wrong, &numeric, 1e-4);
        assert!(r.blocks[0].passed && !r.blocks[1].passed);
        assert!((r.blocks[1].max_rel_error - 2e-4).abs() < 1e-12);
    }
}
