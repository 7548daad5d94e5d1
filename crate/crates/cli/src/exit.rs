use std::fmt;

use singstyle_core::Error as CoreError;

pub const USAGE: i32 = 2;
pub const MISSING_FILE: i32 = 3;
pub const NUMERIC: i32 = 4;

/// Bad flags, config keys or values.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidArgument(_) => USAGE,
        CoreError::MissingFile(_) | CoreError::Io(_) | CoreError::Format { .. } | CoreError::Wav(_) => MISSING_FILE,
        _ => NUMERIC,
    }
}

/// Exit status for an error chain: the first recognised cause decides.
pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound { MISSING_FILE } else { NUMERIC };
        }
    }
    NUMERIC
}

/// `ERR <code>: message: cause: ...`
pub fn report(err: &anyhow::Error) -> (i32, String) {
    let code = code_for(err);
    (code, format!("ERR {code}: {err:#}"))
}
