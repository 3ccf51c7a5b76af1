//! Atomic output files tagged with the config hash.

use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use tempfile::NamedTempFile;

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    /// The directory is created with the first file.
    pub fn new(dir: &Path, hash: &str) -> Self {
        OutputDir { dir: dir.to_path_buf(), hash: hash.to_string(), written: Vec::new() }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes to a temporary file in the target directory, then renames it into place.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        log::info!("wrote {}", path.display());
        self.written.push(path.clone());
        Ok(path)
    }

    /// JSON object holding the fields of `body` plus `config_hash`; keys are sorted.
    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> std::io::Result<PathBuf> {
        let text = tagged_json(&self.hash, body);
        self.write_bytes(name, format!("{text}\n").as_bytes())
    }

    /// CSV preceded by a `# config_hash=<hex>` comment line.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<PathBuf> {
        let mut buf = format!("# config_hash={}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write_bytes(name, &buf)
    }

    /// SVG document with the hash in a leading XML comment.
    pub fn write_svg(&mut self, name: &str, svg: &str) -> std::io::Result<PathBuf> {
        let text = format!("<!-- config_hash={} -->\n{svg}", self.hash);
        self.write_bytes(name, text.as_bytes())
    }
}

/// `body` serialized as a JSON object with a `config_hash` key added.
pub fn tagged_json<T: Serialize>(hash: &str, body: &T) -> String {
    let mut map = serde_json::Map::new();
    map.insert("config_hash".into(), hash.into());
    match serde_json::to_value(body).expect("output serializes") {
        serde_json::Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("data".into(), other);
        }
    }
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("output serializes")
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_carry_the_hash_and_replace_atomically() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::new(&tmp.path().join("o"), "abc");
        out.write_csv("a.csv", &["x", "y"], &[vec![num(1.5), num(f64::NAN)]]).unwrap();
        out.write_csv("a.csv", &["x", "y"], &[vec![num(2.0), num(0.1)]]).unwrap();
        let text = std::fs::read_to_string(tmp.path().join("o/a.csv")).unwrap();
        assert_eq!(text, "# config_hash=abc\nx,y\n2,0.1\n");
        out.write_json("b.json", &serde_json::json!({"v": 1})).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/b.json")).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["v"], 1);
        let names: Vec<_> = std::fs::read_dir(tmp.path().join("o")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2, "no temporary files left behind");
    }
}
