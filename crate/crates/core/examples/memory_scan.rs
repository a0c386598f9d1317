//! Mean ARE of every scheme across a few memory sizes, sharing one plan.
//!
//! `cargo run --release -p countingstars --example memory_scan -- configs/iridium_0.5.toml`

use std::path::Path;
use std::time::Instant;

use countingstars::baselines::Scheme;
use countingstars::sim::{harness::mean_metric, run_with_plan, Plan, RunOptions, Scenario};

fn main() {
    let path = std::env::args()
        .nth(1)
        .expect("usage: memory_scan <scenario.toml>");
    let mut s = Scenario::load(Path::new(&path)).unwrap();
    let t = Instant::now();
    let plan = Plan::build(&s).unwrap();
    println!(
        "plan {:?}, max_h {}, mean flow set {:.1}",
        t.elapsed(),
        plan.max_h(),
        plan.mean_flow_set_size()
    );
    for mem in [2048usize, 4096, 6144, 8192, 10240] {
        s.memory_bytes = mem;
        let r = run_with_plan(&s, &plan, RunOptions::default()).unwrap();
        let packets: u64 = r.iter().map(|e| e.packets_injected).sum();
        print!("{mem:>6} B, {packets} packets:");
        for sc in Scheme::ALL {
            print!(" {}={:.4}", sc.name(), mean_metric(&r, sc, |m| m.are));
        }
        println!();
    }
}
