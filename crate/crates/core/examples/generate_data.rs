//! Draws every builtin mixture and prints its class histogram.
//!
//! `cargo run --example generate_data -- ids2 out.csv` writes one as CSV instead.

use fedkhc::datagen::{builtin_names, generate, lookup};
use fedkhc::experiment::generate_data;
use fedkhc::model::{SeededRng, StreamRole};

fn main() -> fedkhc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [name, path] = args.as_slice() {
        let file = std::fs::File::create(path).expect("create output file");
        let data = generate_data(name, 0, std::io::BufWriter::new(file))?;
        println!("wrote {} rows to {path}", data.len());
        return Ok(());
    }
    for name in builtin_names() {
        let b = lookup(&name)?;
        let data = generate(&b.spec, &mut SeededRng::for_role(0, StreamRole::Data))?;
        let sizes = data.ground_truth().unwrap().cluster_sizes();
        println!("{name:18} n={:5} d={} sizes {sizes:?} non_iid={}", data.len(), data.dim(), b.non_iid);
    }
    Ok(())
}
