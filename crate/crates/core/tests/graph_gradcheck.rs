use nws_core::dsp::{stft_with, Padding};
use nws_core::graph::{
    grad_check, ConvSpec, Graph, GraphError, LstmVars, ParamStore, StftResolution, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 100;
const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

/// Every layer primitive's check, each run over `SEEDS` random draws.
pub const PRIMITIVES: &[(&str, fn())] = &[
    ("dense_and_elementwise", dense_and_elementwise),
    ("conv1d_causal_and_same", conv1d_causal_and_same),
    ("gated_repeat_concat", gated_repeat_concat),
    ("bidirectional_lstm", bidirectional_lstm),
    ("softmax_cross_entropy", softmax_cross_entropy),
    ("stft_loss", stft_loss),
    ("sinc_lowpass_and_frame_fir", sinc_lowpass_and_frame_fir),
];

#[test]
fn primitives_match_central_differences() {
    for (name, check) in PRIMITIVES {
        println!("{name}");
        check();
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Reduces `y` to a scalar through a fixed random projection so every
/// output element carries a distinct weight.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var, GraphError> {
    let (r, c) = g.value(y).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
    let w = g.input(Tensor::from_vec(r, c, rand_vec(&mut rng, r * c, 1.0)));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn check(name: &str, seed: u64, store: &mut ParamStore<f64>, build: &dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var, GraphError>) {
    let report = grad_check(store, build, STEP, TOL).unwrap();
    assert!(report.passed(), "{name} seed {seed}: {:?}", report.worst());
}

fn for_seeds(f: impl Fn(u64, &mut ChaCha8Rng)) {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        f(seed, &mut rng);
    }
}

pub fn dense_and_elementwise() {
    for_seeds(|seed, rng| {
        let (t, i, o) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let mut s = ParamStore::new();
        s.add("x", &[t, i], rand_vec(rng, t * i, 1.0));
        s.add("w", &[i, o], rand_vec(rng, i * o, 1.0));
        s.add("b", &[o], rand_vec(rng, o, 1.0));
        s.add("m", &[t, o], rand_vec(rng, t * o, 1.0));
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let p = |g: &mut Graph<f64>, n: &str| g.param(s, s.id(n).unwrap());
            let (x, w, b, m) = (p(g, "x"), p(g, "w"), p(g, "b"), p(g, "m"));
            let y = g.dense(x, w, Some(b))?;
            let y = g.mul(y, m)?;
            let y = g.sub(y, b)?;
            let th = g.tanh(y);
            let sg = g.sigmoid(y);
            let rl = g.relu(y);
            let z = g.add(th, sg)?;
            let z = g.add(z, rl)?;
            let z = g.mul(z, b)?;
            let z = g.scale(z, 0.7);
            let mean = g.mean(z);
            let tot = project(g, z, seed)?;
            g.add(tot, mean)
        };
        check("dense/elementwise", seed, &mut s, &build);
    });
}

pub fn conv1d_causal_and_same() {
    for_seeds(|seed, rng| {
        let t = rng.random_range(2..12);
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let causal = seed % 2 == 0;
        let k = if causal { rng.random_range(1..4) } else { 2 * rng.random_range(0..2) + 1 };
        let d = rng.random_range(1..5);
        let mut s = ParamStore::new();
        s.add("x", &[t, ci], rand_vec(rng, t * ci, 1.0));
        s.add("w", &[k, ci, co], rand_vec(rng, k * ci * co, 1.0));
        s.add("b", &[co], rand_vec(rng, co, 1.0));
        let spec = if causal { ConvSpec::causal(k, d) } else { ConvSpec::same(k, d) };
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let p = |g: &mut Graph<f64>, n: &str| g.param(s, s.id(n).unwrap());
            let (x, w, b) = (p(g, "x"), p(g, "w"), p(g, "b"));
            let y = g.conv1d(x, w, Some(b), spec)?;
            project(g, y, seed)
        };
        check("conv1d", seed, &mut s, &build);
    });
}

pub fn gated_repeat_concat() {
    for_seeds(|seed, rng| {
        let (t, c, f) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
        let mut s = ParamStore::new();
        s.add("a", &[t, 2 * c], rand_vec(rng, t * 2 * c, 2.0));
        s.add("e", &[t * f, 2], rand_vec(rng, t * f * 2, 1.0));
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let a = g.param(s, s.id("a").unwrap());
            let e = g.param(s, s.id("e").unwrap());
            let z = g.gated(a)?;
            let r = g.repeat_rows(z, f)?;
            let y = g.concat_cols(r, e)?;
            project(g, y, seed)
        };
        check("gated/repeat/concat", seed, &mut s, &build);
    });
}

pub fn bidirectional_lstm() {
    for_seeds(|seed, rng| {
        let (t, i, h) = (rng.random_range(1..6), rng.random_range(1..4), rng.random_range(1..4));
        let mut s = ParamStore::new();
        s.add("x", &[t, i], rand_vec(rng, t * i, 1.0));
        for d in ["f", "b"] {
            s.add(format!("{d}.wih"), &[i, 4 * h], rand_vec(rng, i * 4 * h, 0.8));
            s.add(format!("{d}.whh"), &[h, 4 * h], rand_vec(rng, h * 4 * h, 0.8));
            s.add(format!("{d}.b"), &[4 * h], rand_vec(rng, 4 * h, 0.5));
        }
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let p = |g: &mut Graph<f64>, n: &str| g.param(s, s.id(n).unwrap());
            let x = p(g, "x");
            let dir = |g: &mut Graph<f64>, d: &str| LstmVars {
                wih: p(g, &format!("{d}.wih")),
                whh: p(g, &format!("{d}.whh")),
                b: p(g, &format!("{d}.b")),
            };
            let (fw, bw) = (dir(g, "f"), dir(g, "b"));
            let y = g.bilstm(x, fw, bw)?;
            project(g, y, seed)
        };
        check("bilstm", seed, &mut s, &build);
    });
}

pub fn softmax_cross_entropy() {
    for_seeds(|seed, rng| {
        let (t, v) = (rng.random_range(1..6), rng.random_range(2..9));
        let targets: Vec<usize> = (0..t).map(|_| rng.random_range(0..v)).collect();
        let mut s = ParamStore::new();
        s.add("z", &[t, v], rand_vec(rng, t * v, 3.0));
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let z = g.param(s, s.id("z").unwrap());
            g.softmax_cross_entropy(z, &targets)
        };
        check("softmax_ce", seed, &mut s, &build);
    });
}

/// Draws a signal whose STFT has no bin near zero magnitude. Close to a
/// zero the log-magnitude curvature is large enough that central
/// differences at the fixed step stop being an accurate oracle.
fn well_conditioned(rng: &mut ChaCha8Rng, n: usize, res: &[StftResolution]) -> Vec<f64> {
    loop {
        let x = rand_vec(rng, n, 1.0);
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let ok = res.iter().all(|r| {
            let s = stft_with(&xf, r.fft_size, r.hop, r.win_length, Padding::Zero);
            s.data.iter().all(|c| c.norm() > 0.01)
        });
        if ok {
            return x;
        }
    }
}

pub fn stft_loss() {
    let res = [StftResolution::new(16, 4, 12), StftResolution::new(8, 2, 6)];
    for_seeds(|seed, rng| {
        let n = rng.random_range(8..40);
        let target = well_conditioned(rng, n, &res);
        let mut s = ParamStore::new();
        s.add("x", &[n, 1], well_conditioned(rng, n, &res));
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let x = g.param(s, s.id("x").unwrap());
            g.stft_loss(x, &target, &res)
        };
        check("stft_loss", seed, &mut s, &build);
    });
}

pub fn sinc_lowpass_and_frame_fir() {
    for_seeds(|seed, rng| {
        let (frames, hop, taps) = (rng.random_range(1..4), rng.random_range(1..6), 2 * rng.random_range(1..5) + 1);
        let sr = 16_000.0;
        let mut s = ParamStore::new();
        s.add("x", &[frames * hop, 1], rand_vec(rng, frames * hop, 1.0));
        s.add("logit", &[frames, 1], rand_vec(rng, frames, 2.0));
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let x = g.param(s, s.id("x").unwrap());
            let z = g.param(s, s.id("logit").unwrap());
            let z = g.sigmoid(z);
            let fc = g.scale(z, sr / 2.0);
            let lp = g.sinc_lowpass(fc, taps, sr)?;
            let y = g.frame_fir(x, lp, hop)?;
            project(g, y, seed)
        };
        check("sinc/frame_fir", seed, &mut s, &build);
    });
}
