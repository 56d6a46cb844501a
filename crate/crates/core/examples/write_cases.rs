//! Regenerates the bundled instance files under `data/`.
//!
//!     cargo run -p ecprice-core --example write_cases -- data

use std::path::PathBuf;

use ecprice_core::cases::{case_study, desk_instance};
use ecprice_core::load::write_instance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    write_instance(&desk_instance(0.6, 1.0)?, &root.join("desk"))?;
    write_instance(&case_study(42, 0.6, 1.0)?, &root.join("case14"))?;
    println!("wrote {}", root.display());
    Ok(())
}
