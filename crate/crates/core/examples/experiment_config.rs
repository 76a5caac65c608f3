//! Drive a BER sweep from JSON, exactly as the `tpg` binary does, and print
//! the CSV with its metadata preamble.

use std::path::Path;

use tpg_detector::harness::{parse_experiment, run_experiment};

const CONFIG: &str = r#"{
    "kind": "ber-sweep",
    "n": 8, "m": 6,
    "snr_db": [6, 10, 14],
    "seed": 1,
    "stop": {"max_trials": 2000, "target_errors": 100},
    "detectors": [
        {"type": "mmse"},
        {"type": "iwsoav", "config": {"k_itr": 50}, "alpha_by_snr": [[14, 2.0]]},
        {"type": "tpg", "source": {"train": {"t_max": 16}}}
    ]
}"#;

fn main() -> tpg_detector::Result<()> {
    let exp = parse_experiment(CONFIG)?;
    for out in run_experiment(&exp, Path::new("."))? {
        println!("== {}", out.file_name);
        print!("{}", out.body);
    }
    Ok(())
}
