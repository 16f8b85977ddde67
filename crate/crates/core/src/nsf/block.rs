use rand::Rng;

use crate::cond::CondInput;
use crate::graph::{ConvSpec, Graph, GraphError, ParamId, ParamStore, Real, Var};

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    conv_w: ParamId,
    conv_b: ParamId,
    cond_w: ParamId,
    res_w: ParamId,
    res_b: ParamId,
}

/// One filter block: input projection, kernel-3 dilated non-causal
/// convolutions with gated activations, residual and skip paths, and a
/// two-layer output head added back onto the block input.
#[derive(Debug, Clone)]
pub(crate) struct BlockIds {
    in_w: ParamId,
    in_b: ParamId,
    layers: Vec<(usize, LayerIds)>,
    out1_w: ParamId,
    out1_b: ParamId,
    out2_w: ParamId,
    out2_b: ParamId,
}

impl BlockIds {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        dilations: &[usize],
        cond_dim: usize,
        rng: &mut R,
    ) -> Self {
        let c = channels;
        let in_w = store.add_glorot(format!("{prefix}.in.w"), &[1, c], 1, c, rng);
        let in_b = store.add_zeros(format!("{prefix}.in.b"), &[c]);
        let layers = dilations
            .iter()
            .enumerate()
            .map(|(l, &d)| {
                let p = format!("{prefix}.l{l}");
                let ids = LayerIds {
                    conv_w: store.add_glorot(format!("{p}.conv.w"), &[3, c, 2 * c], 3 * c, 2 * c, rng),
                    conv_b: store.add_zeros(format!("{p}.conv.b"), &[2 * c]),
                    cond_w: store.add_glorot(format!("{p}.cond.w"), &[cond_dim, 2 * c], cond_dim, 2 * c, rng),
                    res_w: store.add_glorot(format!("{p}.res.w"), &[c, c], c, c, rng),
                    res_b: store.add_zeros(format!("{p}.res.b"), &[c]),
                };
                (d, ids)
            })
            .collect();
        let half = c / 2;
        Self {
            in_w,
            in_b,
            layers,
            out1_w: store.add_glorot(format!("{prefix}.out1.w"), &[c, half], c, half, rng),
            out1_b: store.add_zeros(format!("{prefix}.out1.b"), &[half]),
            out2_w: store.add_glorot(format!("{prefix}.out2.w"), &[half, 1], half, 1, rng),
            out2_b: store.add_zeros(format!("{prefix}.out2.b"), &[1]),
        }
    }

    /// `e [T, 1] -> [T, 1]`; conditioning features must already be
    /// rescaled.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, e: Var, cond: CondInput) -> Result<Var, GraphError> {
        let p = |g: &mut Graph<T>, id| g.param(store, id);
        let (w, b) = (p(g, self.in_w), p(g, self.in_b));
        let mut h = g.dense(e, w, Some(b))?;
        let mut skip: Option<Var> = None;
        for &(d, ref ids) in &self.layers {
            let (cw, cb) = (p(g, ids.conv_w), p(g, ids.conv_b));
            let a = g.conv1d(h, cw, Some(cb), ConvSpec::same(3, d))?;
            let kw = p(g, ids.cond_w);
            let c = cond.project(g, kw)?;
            let a = g.add(a, c)?;
            let z = g.gated(a)?;
            let (rw, rb) = (p(g, ids.res_w), p(g, ids.res_b));
            let r = g.dense(z, rw, Some(rb))?;
            h = g.add(h, r)?;
            skip = Some(match skip {
                Some(s) => g.add(s, z)?,
                None => z,
            });
        }
        let skip = skip.unwrap_or(h);
        let (w1, b1) = (p(g, self.out1_w), p(g, self.out1_b));
        let o = g.dense(skip, w1, Some(b1))?;
        let o = g.tanh(o);
        let (w2, b2) = (p(g, self.out2_w), p(g, self.out2_b));
        let o = g.dense(o, w2, Some(b2))?;
        g.add(e, o)
    }
}
