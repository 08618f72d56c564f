//! Builds a small expression on the tape and compares its reverse-mode
//! gradient with central differences.

use attnforge::autodiff::{grad_check, Tape, Tensor};

fn main() -> attnforge::Result<()> {
    let x = Tensor::matrix(3, 2, vec![0.3, -1.2, 0.8, 0.1, -0.5, 2.0])?;
    let w = Tensor::matrix(2, 2, vec![0.7, -0.4, 0.25, 1.1])?;

    let mut tape = Tape::new();
    let xv = tape.param(x.clone())?;
    let wv = tape.param(w.clone())?;
    let h = tape.matmul(xv, wv)?;
    let h = tape.elu(h)?;
    let loss = tape.sum_squares(h)?;
    tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).data()[0]);
    println!("dL/dW = {:?}", tape.grad(wv).unwrap());

    let worst = grad_check(
        |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.elu(h)?;
            t.sum_squares(h)
        },
        &[x, w],
        1e-6,
    )?;
    println!("worst relative error against finite differences: {worst:.2e}");
    Ok(())
}
