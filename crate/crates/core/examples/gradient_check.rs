//! Compares the tape's reverse-mode gradient of a small expression against
//! central differences.
//!
//! cargo run --example gradient_check

use ligas::tensor::{Tape, Tensor};

fn loss(x: &Tensor, w: &Tensor) -> (f64, Tensor) {
    let mut t = Tape::new();
    let xv = t.leaf(x.clone(), true);
    let wv = t.leaf(w.clone(), false);
    let h = t.matmul(xv, wv).unwrap();
    let h = t.gelu(h);
    let p = t.softmax(h, 1).unwrap();
    let y = t.sum(p);
    let y = {
        let sq = t.mul(h, h).unwrap();
        let s = t.sum(sq);
        t.add(y, s).unwrap()
    };
    t.backward(y).unwrap();
    (t.value(y).data()[0], t.grad(xv).unwrap().clone())
}

fn main() {
    let x = Tensor::new(vec![2, 3], vec![0.3, -1.2, 0.8, 1.5, 0.1, -0.4]).unwrap();
    let w = Tensor::new(vec![3, 2], vec![0.5, -0.7, 1.1, 0.2, -0.3, 0.9]).unwrap();
    let (value, grad) = loss(&x, &w);
    println!("f(x) = {value:.6}");

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut up = x.clone();
        up.data_mut()[i] += h;
        let mut down = x.clone();
        down.data_mut()[i] -= h;
        let numeric = (loss(&up, &w).0 - loss(&down, &w).0) / (2.0 * h);
        let analytic = grad.data()[i];
        let err = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
        worst = worst.max(err);
        println!("x[{i}]  analytic {analytic:+.8}  numeric {numeric:+.8}  rel err {err:.1e}");
    }
    println!("max relative error {worst:.1e}");
}
