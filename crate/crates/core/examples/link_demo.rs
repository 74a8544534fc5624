//! In-process Alice/Bob session on the link preset.
//!
//! usage: link_demo [frames] [seed]

use qkd_core::config::Scenario;
use qkd_core::link::run_in_process;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut sc = Scenario::link();
    let frames: usize = args.get(1).map_or(sc.sim.frames, |s| s.parse().unwrap());
    sc.seed = args.get(2).map_or(1, |s| s.parse().unwrap());
    let t = std::time::Instant::now();
    let (a, b) = run_in_process(&sc, frames).unwrap();
    println!("alice {:?}", a.counters);
    println!("bob   {:?}", b.counters);
    println!("qber {:?} key {} bits, digests {:016x} {:016x}", a.qber(), a.key.len(), a.key_digest, b.key_digest);
    println!("analysis {:?}", a.analysis);
    println!("keys equal {} in {:?}", a.key == b.key, t.elapsed());
}
