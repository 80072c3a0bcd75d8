use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

fn collect(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            collect(&path, out);
        } else if matches!(path.extension().and_then(|e| e.to_str()), Some("rs" | "toml")) {
            out.push(path);
        }
    }
}

fn main() {
    let manifest = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    let crates = manifest.parent().expect("crate lives under crates/").to_path_buf();
    let workspace = crates.parent().expect("workspace root").to_path_buf();

    let mut files = vec![workspace.join("Cargo.toml")];
    for name in ["core", "learn", "harness"] {
        let root = crates.join(name);
        files.push(root.join("Cargo.toml"));
        collect(&root.join("src"), &mut files);
        println!("cargo:rerun-if-changed={}", root.join("src").display());
        println!("cargo:rerun-if-changed={}", root.join("Cargo.toml").display());
    }
    println!("cargo:rerun-if-changed={}", workspace.join("Cargo.toml").display());
    files.sort();
    files.dedup();

    let mut hasher = Sha256::new();
    for file in &files {
        let rel = file.strip_prefix(&workspace).unwrap_or(file);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(fs::read(file).unwrap_or_default());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    println!("cargo:rustc-env=SKYVLC_CODE_HASH={}", &hex[..40]);
}
