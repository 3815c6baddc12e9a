use std::io::{self, Write};
use std::path::Path;

use tempfile::NamedTempFile;

/// Writes `body` to `path` through a temporary file in the same directory,
/// then renames it into place.
pub fn write_atomic(path: &Path, body: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(body)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Sends `body` to `path` if given, otherwise to stdout.
pub fn emit(path: Option<&Path>, body: &[u8]) -> io::Result<()> {
    match path {
        Some(p) => write_atomic(p, body),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body)?;
            out.flush()
        }
    }
}

pub fn json_line<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut body = serde_json::to_vec_pretty(value).expect("serializable output");
    body.push(b'\n');
    body
}

/// CSV with a header row taken from the field names of `R`.
pub fn csv_bytes<R: serde::Serialize>(rows: impl IntoIterator<Item = R>) -> csv::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_header_follows_fields() {
        #[derive(serde::Serialize)]
        struct Row {
            x: u32,
            ok: bool,
        }
        let body = csv_bytes([Row { x: 1, ok: true }, Row { x: 2, ok: false }]).unwrap();
        assert_eq!(String::from_utf8(body).unwrap(), "x,ok\n1,true\n2,false\n");
    }

    #[test]
    fn missing_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nope").join("x.txt");
        assert!(write_atomic(&p, b"x").is_err());
    }
}
