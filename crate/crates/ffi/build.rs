use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("maskid.h");
    let mut config = cbindgen::Config::default();
    config.language = cbindgen::Language::C;
    config.include_guard = Some("MASKID_H".into());
    config.cpp_compat = true;
    config.documentation = true;
    config.header = Some("/* C interface for the maskid speech-enhancement models. */".into());
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation failed")
        .write_to_file(header);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
