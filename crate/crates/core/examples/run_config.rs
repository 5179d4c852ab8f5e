//! Load a JSON configuration with overrides and print its manifest.
//!
//! cargo run --example run_config -- configs/example5.json laplace.paths=500

use mvldp::cli::manifest;
use mvldp::config::load_config;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "example5".into());
    let overrides: Vec<String> = args.collect();
    match load_config(&path, &overrides) {
        Ok(cfg) => {
            println!("n = {}, m = {}, scales = {:?}", cfg.system.n, cfg.system.m, cfg.scales);
            println!("{}", serde_json::to_string_pretty(&manifest("inspect", &cfg)).unwrap());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
