use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Turns `key = value` lines into `--key value` arguments. Blank lines and
/// lines starting with `#` are skipped; underscores in keys become dashes.
pub fn config_args(path: &Path) -> Result<Vec<OsString>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), i + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("{}:{}: invalid key", path.display(), i + 1);
        }
        out.push(format!("--{key}").into());
        out.push(value.trim().into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.cfg");
        fs::write(&p, "# c\n\nsnr_db = 5\n m=12 \n").unwrap();
        let args = config_args(&p).unwrap();
        assert_eq!(args, vec!["--snr-db", "5", "--m", "12"]);
        fs::write(&p, "oops\n").unwrap();
        assert!(config_args(&p).is_err());
    }
}
