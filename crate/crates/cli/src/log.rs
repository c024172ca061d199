//! One JSON object per line on stderr.

use std::str::FromStr;
use std::sync::atomic::{AtomicU8, Ordering};

use gsdkit_core::Error;
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Info = 1,
    Debug = 2,
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "error" => Ok(Level::Error),
            "info" => Ok(Level::Info),
            "debug" => Ok(Level::Debug),
            other => Err(Error::InvalidValue(format!("unknown log level `{other}`"))),
        }
    }
}

static LEVEL: AtomicU8 = AtomicU8::new(Level::Info as u8);

pub fn set_level(level: Level) {
    LEVEL.store(level as u8, Ordering::Relaxed);
}

fn enabled(level: Level) -> bool {
    level as u8 <= LEVEL.load(Ordering::Relaxed)
}

pub fn stage(name: &str, elapsed_ms: u128, fields: Value) {
    if !enabled(Level::Info) {
        return;
    }
    let mut line = Map::new();
    line.insert("level".into(), json!("info"));
    line.insert("stage".into(), json!(name));
    if let Value::Object(extra) = fields {
        line.extend(extra);
    }
    line.insert("elapsed_ms".into(), json!(elapsed_ms));
    eprintln!("{}", Value::Object(line));
}

pub fn error(err: &Error) {
    let mut line = json!({
        "level": "error",
        "kind": err.kind(),
        "message": err.to_string(),
    });
    if let Some(id) = err.entry_id() {
        line["id"] = json!(id);
    }
    eprintln!("{line}");
}
