//! Generate the synthetic demo corpus and a matching config file.
//!
//!     cargo run -p libexpert-core --example demo -- /tmp/demo [developers] [seed]
//!     libexpert run --config /tmp/demo/libexpert.toml

use std::path::PathBuf;

use anyhow::Context;
use libexpert::fixture::demo_corpus;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().context("usage: demo <dir> [developers] [seed]")?);
    let developers: usize = args.next().map_or(Ok(60), |a| a.parse())?;
    let seed: u64 = args.next().map_or(Ok(42), |a| a.parse())?;

    std::fs::create_dir_all(&root)?;
    let demo = demo_corpus(&root, developers, seed)?;
    let cfg = demo.config(&root.join("out"), seed);
    let path = root.join("libexpert.toml");
    std::fs::write(&path, toml::to_string(&cfg)?)?;
    println!("corpus in {}", demo.repos_dir.display());
    println!("config written to {}", path.display());
    Ok(())
}
