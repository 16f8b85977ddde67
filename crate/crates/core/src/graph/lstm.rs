//! Single-direction LSTM kernels used by the fused bidirectional op.
//! Gate order within the 4H block is input, forget, cell, output.

use super::real::{gemm, MatRef};
use super::Real;

#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    /// Post-activation gates, `T x 4H`.
    pub gates: Vec<T>,
    /// Cell state, `T x H`.
    pub c: Vec<T>,
    /// Hidden state, `T x H`.
    pub h: Vec<T>,
}

pub(crate) struct LstmWeights<'a, T> {
    pub wih: &'a [T],
    pub whh: &'a [T],
    pub b: &'a [T],
}

pub(crate) struct LstmGrads<T> {
    pub dx: Vec<T>,
    pub dwih: Vec<T>,
    pub dwhh: Vec<T>,
    pub db: Vec<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn order(steps: usize, reverse: bool) -> Vec<usize> {
    if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    }
}

pub(crate) fn forward<T: Real>(x: &[T], steps: usize, n_in: usize, w: &LstmWeights<'_, T>, hidden: usize, reverse: bool) -> LstmCache<T> {
    let g4 = 4 * hidden;
    let mut z = vec![T::zero(); steps * g4];
    for t in 0..steps {
        z[t * g4..(t + 1) * g4].copy_from_slice(w.b);
    }
    gemm(T::one(), MatRef::new(x, steps, n_in), MatRef::new(w.wih, n_in, g4), T::one(), &mut z, g4);

    let mut cache = LstmCache {
        gates: vec![T::zero(); steps * g4],
        c: vec![T::zero(); steps * hidden],
        h: vec![T::zero(); steps * hidden],
    };
    let mut prev: Option<usize> = None;
    for t in order(steps, reverse) {
        let zt = &mut z[t * g4..(t + 1) * g4];
        if let Some(p) = prev {
            let hp = &cache.h[p * hidden..(p + 1) * hidden];
            gemm(T::one(), MatRef::new(hp, 1, hidden), MatRef::new(w.whh, hidden, g4), T::one(), zt, g4);
        }
        for j in 0..hidden {
            let i = sigmoid(zt[j]);
            let f = sigmoid(zt[hidden + j]);
            let g = zt[2 * hidden + j].tanh();
            let o = sigmoid(zt[3 * hidden + j]);
            let c_prev = prev.map_or(T::zero(), |p| cache.c[p * hidden + j]);
            let c = f * c_prev + i * g;
            let gates = &mut cache.gates[t * g4..(t + 1) * g4];
            gates[j] = i;
            gates[hidden + j] = f;
            gates[2 * hidden + j] = g;
            gates[3 * hidden + j] = o;
            cache.c[t * hidden + j] = c;
            cache.h[t * hidden + j] = o * c.tanh();
        }
        prev = Some(t);
    }
    cache
}

/// `dh_out` is the upstream gradient of the concatenated output; this
/// direction reads columns `offset..offset + hidden` with row stride
/// `stride`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    x: &[T],
    steps: usize,
    n_in: usize,
    w: &LstmWeights<'_, T>,
    hidden: usize,
    reverse: bool,
    cache: &LstmCache<T>,
    dh_out: &[T],
    stride: usize,
    offset: usize,
) -> LstmGrads<T> {
    let g4 = 4 * hidden;
    let one = T::one();
    let ord = order(steps, reverse);
    let mut dz = vec![T::zero(); steps * g4];
    let mut dwhh = vec![T::zero(); hidden * g4];
    let mut dh_next = vec![T::zero(); hidden];
    let mut dc_next = vec![T::zero(); hidden];
    for s in (0..steps).rev() {
        let t = ord[s];
        let prev = if s > 0 { Some(ord[s - 1]) } else { None };
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        {
            let dzt = &mut dz[t * g4..(t + 1) * g4];
            for j in 0..hidden {
                let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
                let tc = cache.c[t * hidden + j].tanh();
                let c_prev = prev.map_or(T::zero(), |p| cache.c[p * hidden + j]);
                let dh = dh_out[t * stride + offset + j] + dh_next[j];
                let dc = dh * o * (one - tc * tc) + dc_next[j];
                dc_next[j] = dc * f;
                dzt[j] = dc * g * i * (one - i);
                dzt[hidden + j] = dc * c_prev * f * (one - f);
                dzt[2 * hidden + j] = dc * i * (one - g * g);
                dzt[3 * hidden + j] = dh * tc * o * (one - o);
            }
        }
        let dzt = &dz[t * g4..(t + 1) * g4];
        gemm(one, MatRef::new(dzt, 1, g4), MatRef::new(w.whh, hidden, g4).t(), T::zero(), &mut dh_next, hidden);
        if let Some(p) = prev {
            let hp = &cache.h[p * hidden..(p + 1) * hidden];
            gemm(one, MatRef::new(hp, hidden, 1), MatRef::new(dzt, 1, g4), one, &mut dwhh, g4);
        }
    }
    let mut dx = vec![T::zero(); steps * n_in];
    gemm(one, MatRef::new(&dz, steps, g4), MatRef::new(w.wih, n_in, g4).t(), T::zero(), &mut dx, n_in);
    let mut dwih = vec![T::zero(); n_in * g4];
    gemm(one, MatRef::new(x, steps, n_in).t(), MatRef::new(&dz, steps, g4), T::zero(), &mut dwih, g4);
    let mut db = vec![T::zero(); g4];
    for t in 0..steps {
        for (d, &v) in db.iter_mut().zip(&dz[t * g4..(t + 1) * g4]) {
            *d += v;
        }
    }
    LstmGrads { dx, dwih, dwhh, db }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_matches_closed_form() {
        // one input, one unit, all weights 0 except biases
        let b = [0.5f64, -0.3, 0.2, 1.0];
        let w = LstmWeights {
            wih: &[0.0; 4],
            whh: &[0.0; 4],
            b: &b,
        };
        let c = forward(&[1.0], 1, 1, &w, 1, false);
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let cell = s(0.5) * 0.2f64.tanh();
        assert!((c.c[0] - cell).abs() < 1e-15);
        assert!((c.h[0] - s(1.0) * cell.tanh()).abs() < 1e-15);
    }

    #[test]
    fn reverse_direction_sees_the_future() {
        let w = LstmWeights {
            wih: &[1.0f64, 1.0, 1.0, 1.0],
            whh: &[0.5, 0.5, 0.5, 0.5],
            b: &[0.0; 4],
        };
        let x = [0.0, 0.0, 2.0];
        let fw = forward(&x, 3, 1, &w, 1, false);
        let bw = forward(&x, 3, 1, &w, 1, true);
        assert_eq!(fw.h[0], 0.0);
        assert!(bw.h[0] != 0.0);
    }
}
