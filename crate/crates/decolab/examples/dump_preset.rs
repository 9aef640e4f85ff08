//! Prints a built-in scenario as a TOML config, ready to edit and feed back
//! to `decolab run` / `decolab validate`.
//!
//! Usage: `cargo run --example dump_preset -- fig4 > fig4.toml`

use decolab::experiments::{preset, PRESET_NAMES};

fn main() {
    let name = match std::env::args().nth(1) {
        Some(name) => name,
        None => {
            eprintln!("usage: dump_preset <{}>", PRESET_NAMES.join("|"));
            std::process::exit(1);
        }
    };
    match preset(&name) {
        Ok(cfg) => print!("{}", cfg.to_toml()),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(1);
        }
    }
}
