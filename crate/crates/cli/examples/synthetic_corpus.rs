//! Writes a synthetic room corpus ready for `scenelift pipeline`.
//!
//! cargo run --example synthetic_corpus -- <dir> [rooms] [first_seed]

use std::path::PathBuf;

use scenelift_cli::fixtures::write_synthetic_corpus;
use scenelift_core::synth::RoomGenerator;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let rooms = args.next().map_or(5, |s| s.parse().expect("rooms must be an integer"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    match write_synthetic_corpus(&dir, rooms, seed, &RoomGenerator::default()) {
        Ok(c) => println!("wrote {} rooms; manifest at {}", c.ids.len(), c.manifest.display()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
