//! Secret keys stored as one line of hex in a local file.

use std::fs;
use std::io::Write;
use std::path::Path;

use custody_core::Identity;

use crate::error::CliError;

pub fn write(path: &Path, identity: &Identity, overwrite: bool) -> Result<(), CliError> {
    if path.exists() && !overwrite {
        return Err(CliError::usage(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts
        .open(path)
        .map_err(|e| CliError::io(&path.display().to_string(), e))?;
    writeln!(f, "{}", identity.secret_hex()).map_err(|e| CliError::io(&path.display().to_string(), e))
}

pub fn read(path: &Path) -> Result<Identity, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Identity::from_secret_hex(text.trim())
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_no_clobber() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k");
        let id = Identity::generate();
        write(&path, &id, false).unwrap();
        assert_eq!(read(&path).unwrap().public_key(), id.public_key());
        assert_eq!(write(&path, &id, false).unwrap_err().exit_code, 2);
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let mode = fs::metadata(&path).unwrap().permissions().mode();
            assert_eq!(mode & 0o777, 0o600);
        }
    }
}
