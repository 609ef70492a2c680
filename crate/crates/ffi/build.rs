use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("set by cargo");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let header = PathBuf::from(&crate_dir).join("include").join("obdkit.h");
    cbindgen::generate(&crate_dir)
        .expect("unable to generate C bindings")
        .write_to_file(header);
}
