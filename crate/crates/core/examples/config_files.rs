//! Writes the default pipeline config and its JSON schema, reads the
//! config back, and round-trips a float map and a mask.
//!
//! cargo run --example config_files -- [out_dir]

use std::path::PathBuf;

use dropstereo::formats::{
    config_schema, read_config, read_mask, read_pfm, write_config, write_json, write_mask,
    write_pfm, FloatMap,
};
use dropstereo::{DropMask, OpticalConfig, PipelineConfig};

fn main() -> dropstereo::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("dropstereo-config"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&out).expect("output directory");
    let config = PipelineConfig::new(OpticalConfig::water());
    write_config(out.join("config.json"), &config)?;
    write_json(out.join("config.schema.json"), &config_schema())?;
    assert_eq!(read_config(out.join("config.json"))?, config);

    let map = FloatMap::new(3, 2, vec![0.5, f32::NAN, -1.25, 2000.0, 1e-7, 3.0])?;
    write_pfm(out.join("map.pfm"), &map)?;
    let back = read_pfm(out.join("map.pfm"))?;
    let same = map
        .data
        .iter()
        .zip(&back.data)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("PFM round trip bit-exact: {same}");

    let mask = DropMask::disk(32, 24, 12.0, 16.0, 9.0)?;
    write_mask(out.join("mask.pgm"), &mask)?;
    println!(
        "mask round trip: {}",
        read_mask(out.join("mask.pgm"))? == mask
    );
    println!("wrote {}", out.display());
    Ok(())
}
