// Regenerating figure data as CSV tables with a JSON summary.

use rarepath::figures::{figure, FigureOptions};
use rarepath::io::{write_csv, write_json};
use rarepath::Result;

pub fn run() -> Result<()> {
    let dir = std::env::temp_dir().join("rarepath-figure-data");
    std::fs::create_dir_all(&dir)?;

    // SIS extinction: ln τ against K, here with small samples to keep it quick
    let opts = FigureOptions {
        vary: Some("k".into()),
        values: Some(vec![30.0, 45.0, 60.0]),
        samples: Some(vec![300]),
        ..FigureOptions::default()
    };
    let defaults = FigureOptions::default();
    for name in ["fig5d", "fig8", "fig10"] {
        let f = figure(name, if name == "fig10" { &opts } else { &defaults })?;
        for (stem, t) in &f.tables {
            let h: Vec<&str> = t.header.iter().map(String::as_str).collect();
            write_csv(dir.join(format!("{stem}.csv")), &h, &t.rows)?;
        }
        write_json(dir.join(format!("{name}.json")), &f.summary)?;
        println!("{name}: {}", serde_json::Value::Object(f.summary.clone()));
    }
    println!("written to {}", dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
