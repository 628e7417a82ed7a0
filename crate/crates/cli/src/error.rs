use std::fmt::Display;
use std::path::Path;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

/// A message plus the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn usage(message: impl Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, err: impl Display) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<fringe_core::Error> for Failure {
    fn from(e: fringe_core::Error) -> Self {
        let code = if e.is_parse_error() { EXIT_USAGE } else { EXIT_IO };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub trait WithPath<T> {
    /// Prefixes the error message with `path`, keeping the exit-code class.
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T> WithPath<T> for fringe_core::Result<T> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| {
            let mut f = Failure::from(e);
            f.message = format!("{}: {}", path.display(), f.message);
            f
        })
    }
}

impl<T> WithPath<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| Failure::io(path, e))
    }
}
