//! Event files.
//!
//! ```text
//! # dims=2
//! # states=2
//! time,dim,state
//! 0.4127,1,1
//! 0.9310,2,1
//! 2000,end,2
//! ```
//!
//! `dim` and `state` are 1-based. The state on an event row is the state in
//! force when the event fires, before the transition it triggers; the next
//! row's label is the post-transition state. The closing `T,end,z(T)` record
//! gives the horizon and the final state. The `# dims` / `# states` comments
//! are optional; without them `M` and `K` are the largest indices seen.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Event, Realization};

pub const EVENT_HEADER: &str = "time,dim,state";

/// Event file contents as a string.
pub fn format_events(data: &Realization) -> String {
    let mut out = String::with_capacity(24 * (data.len() + 4));
    let _ = writeln!(out, "# dims={}", data.dims());
    let _ = writeln!(out, "# states={}", data.states());
    out.push_str(EVENT_HEADER);
    out.push('\n');
    for (n, ev) in data.events().iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            ev.time,
            ev.dim + 1,
            data.event_state(n) + 1
        );
    }
    let _ = writeln!(out, "{},end,{}", data.horizon(), data.final_state() + 1);
    out
}

pub fn write_events<W: Write>(data: &Realization, mut w: W) -> std::io::Result<()> {
    w.write_all(format_events(data).as_bytes())
}

pub fn save_events(data: &Realization, path: &Path) -> Result<()> {
    std::fs::write(path, format_events(data)).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_events(path: &Path) -> Result<Realization> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    read_events(file, path)
}

/// Parses an event file; `path` only labels error messages.
pub fn read_events<R: Read>(reader: R, path: &Path) -> Result<Realization> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut dims_decl: Option<usize> = None;
    let mut states_decl: Option<usize> = None;
    let mut header_seen = false;
    let mut rows: Vec<(Event, usize)> = Vec::new();
    let mut end: Option<(f64, usize, usize)> = None;
    let mut last_time = f64::NEG_INFINITY;

    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.trim().split_once('=') {
                let parsed = || {
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| err(lineno, format!("bad {}: {e}", key.trim())))
                };
                match key.trim() {
                    "dims" => dims_decl = Some(parsed()?),
                    "states" => states_decl = Some(parsed()?),
                    _ => {}
                }
            }
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["time", "dim", "state"] {
                return Err(err(
                    lineno,
                    format!("expected header `{EVENT_HEADER}`, found `{line}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        if end.is_some() {
            return Err(err(
                lineno,
                "row after the closing `T,end,z(T)` record".into(),
            ));
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err(
                lineno,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let time: f64 = cols[0]
            .parse()
            .map_err(|e| err(lineno, format!("bad time `{}`: {e}", cols[0])))?;
        if !time.is_finite() || time < 0.0 {
            return Err(err(
                lineno,
                format!("time {time} must be finite and non-negative"),
            ));
        }
        if time < last_time {
            return Err(err(
                lineno,
                format!("time {time} is earlier than the previous row ({last_time})"),
            ));
        }
        last_time = time;
        let state = parse_index(cols[2], "state").map_err(|m| err(lineno, m))?;
        if states_decl.is_some_and(|k| state >= k) {
            return Err(err(lineno, format!("unknown state {}", state + 1)));
        }
        if cols[1] == "end" {
            end = Some((time, state, lineno));
            continue;
        }
        let dim = parse_index(cols[1], "dim").map_err(|m| err(lineno, m))?;
        if dims_decl.is_some_and(|m| dim >= m) {
            return Err(err(lineno, format!("unknown dimension {}", dim + 1)));
        }
        rows.push((Event { time, dim }, state));
    }

    if !header_seen {
        return Err(err(1, format!("missing header `{EVENT_HEADER}`")));
    }
    let (horizon, final_state, end_line) =
        end.ok_or_else(|| err(0, "missing closing `T,end,z(T)` record".into()))?;
    let dims = dims_decl.unwrap_or_else(|| rows.iter().map(|(e, _)| e.dim + 1).max().unwrap_or(1));
    let states = states_decl.unwrap_or_else(|| {
        rows.iter()
            .map(|&(_, s)| s + 1)
            .chain(std::iter::once(final_state + 1))
            .max()
            .unwrap_or(1)
    });
    Realization::from_labeled(dims, states, horizon, rows, final_state)
        .map_err(|e| err(end_line, e.to_string()))
}

fn parse_index(s: &str, what: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(format!("{what} must be a positive integer, found `{s}`")),
    }
}
