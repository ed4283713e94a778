//! Rough throughput check for the convolution kernels; useful when sizing
//! experiment budgets for a new machine.

use aba::ops::{conv2d_backward, conv2d_forward};
use aba::tensor::Tensor;
use std::time::Instant;

fn bench(name: &str, b: usize, c_in: usize, c_out: usize, hw: usize, k: usize) {
    let input = Tensor::<f32>::filled(&[b, c_in, hw, hw], 0.3);
    let kernel = Tensor::<f32>::filled(&[c_out, c_in, k, k], 0.01);
    let reps = 20;
    let start = Instant::now();
    let mut sink = 0.0f32;
    for _ in 0..reps {
        let out = conv2d_forward(&input, &kernel, None).unwrap();
        sink += out.data()[0];
    }
    let fwd = start.elapsed().as_secs_f64() / reps as f64;
    let grad = Tensor::<f32>::filled(&[b, c_out, hw, hw], 1.0);
    let start = Instant::now();
    for _ in 0..reps {
        let g = conv2d_backward(&input, &kernel, &grad, true, true, false).unwrap();
        sink += g.d_kernel.as_ref().unwrap().data()[0];
    }
    let bwd = start.elapsed().as_secs_f64() / reps as f64;
    let macs = (b * c_out * c_in * k * k * hw * hw) as f64;
    println!(
        "{name}: fwd {:.1} ms ({:.1} GFLOP/s), bwd {:.1} ms ({:.1} GFLOP/s)  [sink {sink:.3}]",
        fwd * 1e3,
        2.0 * macs / fwd / 1e9,
        bwd * 1e3,
        2.0 * 2.0 * macs / bwd / 1e9,
    );
}

fn main() {
    bench("conv 3->32 k3 28x28 B128", 128, 3, 32, 28, 3);
    bench("conv 32->64 k3 14x14 B128", 128, 32, 64, 14, 3);
    bench("conv 16->16 k5 28x28 B32", 32, 16, 16, 28, 5);
    bench("conv 32->32 k7 28x28 B32", 32, 32, 32, 28, 7);
}
