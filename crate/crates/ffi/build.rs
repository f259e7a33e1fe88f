//! Regenerates include/mosa_ffi.h from the extern "C" surface. The header is
//! committed so C consumers do not need cbindgen, but any build refreshes it.

use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR is set by cargo");
    let header = PathBuf::from(&crate_dir).join("include").join("mosa_ffi.h");

    cbindgen::generate(&crate_dir)
        .expect("cbindgen could not parse the FFI surface")
        .write_to_file(&header);

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
