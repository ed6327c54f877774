//! Tour of the tape: record a computation, backpropagate, and verify one
//! gradient against central finite differences by hand.
//!
//! ```bash
//! cargo run -p resae --example autodiff_basics
//! ```

use resae::autodiff::{Tape, Tensor};

fn main() {
    // f(x, w) = mean(tanh(x . w)) for x [2, 3], w [3, 2]
    let x_data = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.3, 0.8, -0.6]);
    let w_data = Tensor::new(vec![3, 2], vec![0.2, -0.4, 0.7, 0.1, -0.3, 0.5]);

    let tape = Tape::new();
    let x = tape.leaf(x_data.clone());
    let w = tape.leaf(w_data.clone());
    let y = tape.tanh(tape.matmul(x, w));
    let loss = tape.mean_all(y);
    println!("loss = {:.10}", tape.value(loss).item());

    let grads = tape.backward(loss);
    let dw = grads.get(w).expect("w gets a gradient");
    println!("dloss/dw = {:?}", dw.data());

    // cross-check one coordinate with central differences
    let eps = 1e-6;
    let coord = 3;
    let eval = |w_t: &Tensor| {
        let t = Tape::new();
        let x = t.leaf(x_data.clone());
        let w = t.leaf(w_t.clone());
        let loss = t.mean_all(t.tanh(t.matmul(x, w)));
        t.value(loss).item()
    };
    let mut plus = w_data.clone();
    plus.data_mut()[coord] += eps;
    let mut minus = w_data.clone();
    minus.data_mut()[coord] -= eps;
    let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
    println!(
        "coordinate {}: reverse-mode {:.10} vs finite-difference {:.10}",
        coord,
        dw.data()[coord],
        numeric
    );

    // softmax rows are probability distributions
    let logits = tape.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
    let probs = tape.softmax(logits, 1);
    println!("softmax rows: {:?}", tape.value(probs).data());
}
