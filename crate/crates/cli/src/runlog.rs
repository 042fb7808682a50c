use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Emitted as one JSON line on stderr when a command finishes, also on failure.
#[derive(Debug, Serialize)]
pub struct RunLog {
    pub command: &'static str,
    pub threads: usize,
    pub stages: Vec<Stage>,
    pub counts: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    started: Option<(String, Instant)>,
}

impl RunLog {
    pub fn new(command: &'static str, threads: usize) -> RunLog {
        RunLog {
            command,
            threads,
            stages: Vec::new(),
            counts: BTreeMap::new(),
            warnings: Vec::new(),
            config: BTreeMap::new(),
            outputs: Vec::new(),
            exit_code: 0,
            error: None,
            started: None,
        }
    }

    /// Closes the running stage, if any, and opens `name`.
    pub fn stage(&mut self, name: &str) {
        self.finish_stage();
        self.started = Some((name.to_string(), Instant::now()));
    }

    pub fn finish_stage(&mut self) {
        if let Some((name, t)) = self.started.take() {
            self.stages.push(Stage {
                name,
                seconds: t.elapsed().as_secs_f64(),
            });
        }
    }

    pub fn count(&mut self, key: &str, value: impl Serialize) {
        self.counts.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn config(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn output(&mut self, path: &std::path::Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn emit(&mut self) {
        self.finish_stage();
        match serde_json::to_string(self) {
            Ok(s) => eprintln!("{s}"),
            Err(e) => eprintln!("run log unavailable: {e}"),
        }
    }
}
