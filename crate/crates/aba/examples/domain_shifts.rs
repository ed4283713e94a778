//! The four synthetic target shifts applied to the same source digits,
//! written as runs/shifts.svg.
//!
//!     cargo run --release --example domain_shifts

use aba::data::{make_domain, synth_digits, ShiftKind};
use aba::harness::image_grid_svg;
use aba::tensor::Tensor;

fn main() -> aba::Result<()> {
    let base = synth_digits::<f32>(10, 9)?;
    let shifted: Vec<_> = ShiftKind::ALL
        .iter()
        .map(|&kind| make_domain(&base, kind, 77).map(|d| (kind.name().to_string(), d)))
        .collect::<aba::Result<Vec<_>>>()?;

    let mut rows: Vec<(String, &Tensor<f32>)> = vec![("source".into(), &base.images)];
    for (name, ds) in &shifted {
        rows.push((name.clone(), &ds.images));
    }
    std::fs::create_dir_all("runs")?;
    std::fs::write("runs/shifts.svg", image_grid_svg(&rows, 10))?;
    println!("wrote runs/shifts.svg");
    Ok(())
}
