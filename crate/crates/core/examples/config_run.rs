//! Drives a full run from a TOML document, as the command-line tool does,
//! and prints the manifest it writes.
//!
//! ```text
//! cargo run --release --example config_run
//! ```

use seirs_spde::config::parse_config;
use seirs_spde::run::{execute, RunManifest, MANIFEST_FILE};

const CONFIG: &str = r#"
[coefficients]
lambda = 0.5
mu1 = 0.1
mu2 = "0.2 + 0.1*cos(pi*x)"
mu3 = 0.1
mu4 = 0.1
alpha = 0.8
beta = 0.2
gamma = 0.3
sigma = 0.4

[noise]
modes = 8
i = { kind = "geometric", first = 0.1, ratio = 0.5 }

[scheme]
dt = 0.01
t_final = 5.0
record_every = 50

[initial]
s = 0.8
e = 0.05
i = 0.1
r = 0.05

[run]
mode = "ensemble"
paths = 20
seed = 3
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("seirs-spde-config-run");
    let mut config = parse_config(CONFIG)?;
    config.run.output = Some(out.clone());
    let report = execute(&config, 1)?;
    for line in &report.summary {
        println!("{line}");
    }
    let manifest = RunManifest::read(&out.join(MANIFEST_FILE))?;
    for entry in &manifest.outputs {
        println!("{} sha256 {}", entry.file, entry.sha256);
    }
    Ok(())
}
