// The `rarepath` program driven in-process: a config file, a model
// parameter flag, and the reproducible run manifest.

use rarepath::io::RunManifest;
use rarepath::Result;

pub fn run() -> Result<()> {
    let dir = std::env::temp_dir().join("rarepath-command-line");
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("sis.toml");
    std::fs::write(&config, "model = \"sis\"\nsamples = 200\n\n[params]\nr0 = 1.5\n")?;

    let mut digests = Vec::new();
    for rep in 0..2 {
        let out = dir.join(format!("run{rep}"));
        let argv = ["rarepath", "mte-ssa", "--config", config.to_str().unwrap(), "--k", "40", "--seed", "9", "--out", out.to_str().unwrap()];
        let code = rarepath::cli::run(argv);
        assert_eq!(code, 0);
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json"))?)?;
        digests.push(m.outputs);
    }
    assert_eq!(digests[0], digests[1]);
    println!("same seed, same digests: {:?}", digests[0]);

    // a missing required parameter is a validation error
    let code = rarepath::cli::run(["rarepath", "wkb", "--model", "sis", "--k", "40", "--out", dir.join("bad").to_str().unwrap()]);
    println!("wkb without r0 exits with {code}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
