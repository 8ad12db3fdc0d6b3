//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use ligas::corpus::{generate_all, LabeledSentence};
use ligas::model::{ModelConfig, ModelWeights};
use ligas::pipeline::{train_classifier, TrainOptions, TrainedClassifier};
use ligas::tensor::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(1, |a|, |n|)`: relative for large values, absolute near 0.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

pub fn max_rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(f: &dyn Fn(&Tensor) -> f64, x: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// A tape primitive under test: input shapes, input range, and the graph.
pub struct Primitive {
    pub name: &'static str,
    pub shapes: fn(&mut ChaCha8Rng) -> Vec<Vec<usize>>,
    pub range: (f64, f64),
    pub build: fn(&mut Tape, &[Var]) -> Var,
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5))
}

pub fn primitives() -> Vec<Primitive> {
    vec![
        Primitive {
            name: "matmul",
            shapes: |r| {
                let (a, b, c) = dims(r);
                vec![vec![a, b], vec![b, c]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.matmul(v[0], v[1]).unwrap(),
        },
        Primitive {
            name: "add",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b], vec![a, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.add(v[0], v[1]).unwrap(),
        },
        Primitive {
            name: "sub",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b], vec![a, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.sub(v[0], v[1]).unwrap(),
        },
        Primitive {
            name: "mul",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b], vec![a, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.mul(v[0], v[1]).unwrap(),
        },
        Primitive {
            name: "scale",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.scale(v[0], -1.7),
        },
        Primitive {
            name: "add_row_bias",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b], vec![b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.add_row_bias(v[0], v[1]).unwrap(),
        },
        Primitive {
            name: "tanh",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-3.0, 3.0),
            build: |t, v| t.tanh(v[0]),
        },
        Primitive {
            name: "gelu",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-4.0, 4.0),
            build: |t, v| t.gelu(v[0]),
        },
        Primitive {
            name: "exp",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.exp(v[0]),
        },
        Primitive {
            name: "ln",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (0.2, 3.0),
            build: |t, v| t.ln(v[0]),
        },
        Primitive {
            name: "transpose",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.transpose(v[0]).unwrap(),
        },
        Primitive {
            name: "softmax_rows",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-3.0, 3.0),
            build: |t, v| t.softmax(v[0], 1).unwrap(),
        },
        Primitive {
            name: "softmax_cols",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-3.0, 3.0),
            build: |t, v| t.softmax(v[0], 0).unwrap(),
        },
        Primitive {
            name: "log_softmax",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-3.0, 3.0),
            build: |t, v| t.log_softmax(v[0]),
        },
        Primitive {
            name: "layer_norm",
            shapes: |r| {
                let (a, b, _) = dims(r);
                let b = b + 1;
                vec![vec![a, b], vec![b], vec![b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
        },
        Primitive {
            name: "gather_rows",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a + 1, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| {
                let n = t.value(v[0]).rows();
                t.gather_rows(v[0], &[n - 1, 0, n - 1, 1 % n]).unwrap()
            },
        },
        Primitive {
            name: "row",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a + 1, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.row(v[0], 1).unwrap(),
        },
        Primitive {
            name: "index",
            shapes: |r| {
                let (a, _, _) = dims(r);
                vec![vec![a + 1]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.index(v[0], 1).unwrap(),
        },
        Primitive {
            name: "sum",
            shapes: |r| {
                let (a, b, _) = dims(r);
                vec![vec![a, b]]
            },
            range: (-2.0, 2.0),
            build: |t, v| t.sum(v[0]),
        },
    ]
}

/// `sum(out * proj)` with a fixed random projection, so every output
/// element contributes a distinct weight.
fn projected(t: &mut Tape, out: Var, proj: &Tensor) -> Var {
    let p = t.constant(proj.clone());
    let m = t.mul(out, p).unwrap();
    t.sum(m)
}

/// Worst relative error over all inputs of one random case.
pub fn check_primitive(p: &Primitive, rng: &mut ChaCha8Rng) -> f64 {
    let shapes = (p.shapes)(rng);
    let inputs: Vec<Tensor> = shapes
        .iter()
        .map(|s| random_tensor(rng, s, p.range.0, p.range.1))
        .collect();
    let out_shape = {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone(), false)).collect();
        let out = (p.build)(&mut t, &vars);
        t.value(out).shape().to_vec()
    };
    let proj = random_tensor(rng, &out_shape, -1.0, 1.0);

    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone(), true)).collect();
    let out = (p.build)(&mut t, &vars);
    let loss = projected(&mut t, out, &proj);
    t.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = t.grad(vars[k]).unwrap().clone();
        let f = |probe: &Tensor| {
            let mut t = Tape::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, v)| t.leaf(if j == k { probe.clone() } else { v.clone() }, false))
                .collect();
            let out = (p.build)(&mut t, &vars);
            let loss = projected(&mut t, out, &proj);
            t.value(loss).data()[0]
        };
        worst = worst.max(max_rel_err(&analytic, &numeric_grad(&f, x)));
    }
    worst
}

/// Small random encoder for gradient checks.
pub fn random_encoder(rng: &mut ChaCha8Rng) -> ModelWeights {
    let heads = rng.gen_range(1..3);
    let mut c = ModelConfig::new(rng.gen_range(6..14)).with_seed(rng.gen());
    c.d_model = heads * rng.gen_range(2..4);
    c.n_heads = heads;
    c.n_layers = rng.gen_range(1..3);
    c.d_ff = rng.gen_range(3..9);
    c.max_seq_len = 8;
    ModelWeights::init(c).unwrap()
}

pub fn random_ids(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<usize> {
    let len = rng.gen_range(3..=max_len);
    let mut ids: Vec<usize> = (0..len).map(|_| rng.gen_range(4..vocab)).collect();
    ids[0] = ligas::tokenizer::CLS_ID;
    ids[len - 1] = ligas::tokenizer::SEP_ID;
    ids
}

/// A five-category corpus and an encoder trained on 80% of it.
pub fn trained_toy(pairs: usize, epochs: usize, seed: u64) -> (Vec<LabeledSentence>, TrainedClassifier) {
    let corpus = generate_all(pairs, seed).unwrap();
    let mut opts = TrainOptions::with_seed(seed);
    opts.train.epochs = epochs;
    let trained = train_classifier(&corpus, &opts).unwrap();
    (corpus, trained)
}

/// Small settings for end-to-end CLI runs.
pub const SMALL_RUN: &str = "\
seed = 7
pairs = 12
d_model = 16
n_heads = 2
d_ff = 32
epochs = 6
steps = 16
";

/// gen, train, attribute, analyze and render through the CLI entry point.
/// Returns the bytes of every artifact, keyed by file name.
pub fn cli_pipeline(dir: &std::path::Path, threads: &str) -> std::collections::BTreeMap<String, Vec<u8>> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    std::fs::write(dir.join("run.cfg"), SMALL_RUN).unwrap();
    let cfg = p("run.cfg");
    let steps: [Vec<String>; 5] = [
        vec!["gen".into(), "--config".into(), cfg.clone(), "--out".into(), p("data")],
        vec![
            "train".into(),
            "--corpus".into(),
            p("data/corpus.tsv"),
            "--config".into(),
            cfg.clone(),
            "--out".into(),
            p("model/weights.bin"),
        ],
        vec![
            "attribute".into(),
            "--corpus".into(),
            p("data/corpus.tsv"),
            "--weights".into(),
            p("model/weights.bin"),
            "--config".into(),
            cfg.clone(),
            "--threads".into(),
            threads.into(),
            "--out".into(),
            p("attributions.jsonl"),
        ],
        vec![
            "analyze".into(),
            "--attributions".into(),
            p("attributions.jsonl"),
            "--trees".into(),
            p("data/trees.tsv"),
            "--config".into(),
            cfg,
            "--out".into(),
            p("report"),
        ],
        vec![
            "render".into(),
            "--attributions".into(),
            p("attributions.jsonl"),
            "--out".into(),
            p("heatmap.html"),
        ],
    ];
    for args in steps {
        let code = ligas::cli::run(std::iter::once("ligas".to_string()).chain(args.iter().cloned()));
        assert_eq!(code, 0, "ligas {}", args.join(" "));
    }
    let mut out = std::collections::BTreeMap::new();
    for name in [
        "data/corpus.tsv",
        "data/trees.tsv",
        "model/weights.bin",
        "model/weights.vocab",
        "model/weights.loss.csv",
        "attributions.jsonl",
        "report/stats.csv",
        "report/patterns.csv",
        "report/subtree_ranks.csv",
        "report/summary.txt",
        "heatmap.html",
    ] {
        out.insert(
            name.to_string(),
            std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}")),
        );
    }
    out
}

/// Covers every letter, so any longer lowercase word splits into pieces.
pub const PANGRAM: &str = "the quick brown fox jumps over the lazy dog .";

/// Untrained one-layer encoder over a pangram vocabulary.
pub fn pangram_model() -> (ModelWeights, ligas::tokenizer::Vocabulary) {
    let vocab = ligas::tokenizer::Vocabulary::build(&[PANGRAM], 60).unwrap();
    let mut c = ModelConfig::new(vocab.len()).with_seed(5);
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ff = 16;
    c.n_layers = 1;
    c.max_seq_len = 64;
    (ModelWeights::init(c).unwrap(), vocab)
}
