use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{parse_field, Parsed, Warning};
use crate::error::{Error, Result};

const SOURCE: &str = "events";

/// One brightness-change measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Timestamp in seconds.
    pub t: f64,
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    /// `true` for a brightness increase.
    pub polarity: bool,
}

/// Streaming reader over `t x y p` lines.
///
/// Yields one `Result<Event>` per non-empty line. Timestamps that go
/// backwards are accepted and counted, since recorded datasets contain
/// jitter.
pub struct EventLines<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    width: usize,
    height: usize,
    last_t: f64,
    non_monotonic: usize,
    first_non_monotonic: Option<usize>,
}

impl<R: BufRead> EventLines<R> {
    pub fn new(reader: R, width: usize, height: usize) -> Self {
        EventLines {
            lines: reader.lines(),
            line_no: 0,
            width,
            height,
            last_t: f64::NEG_INFINITY,
            non_monotonic: 0,
            first_non_monotonic: None,
        }
    }

    pub fn non_monotonic(&self) -> usize {
        self.non_monotonic
    }

    fn parse_line(&mut self, fields: &[&str]) -> Result<Event> {
        let line = self.line_no;
        if fields.len() != 4 {
            return Err(Error::parse(
                SOURCE,
                line,
                format!("expected 4 fields \"t x y p\", found {}", fields.len()),
            ));
        }
        let t: f64 = parse_field(SOURCE, line, "timestamp", fields[0])?;
        if !t.is_finite() {
            return Err(Error::parse(SOURCE, line, "non-finite timestamp"));
        }
        let x: i64 = parse_field(SOURCE, line, "x", fields[1])?;
        let y: i64 = parse_field(SOURCE, line, "y", fields[2])?;
        if x < 0 || x as usize >= self.width || y < 0 || y as usize >= self.height {
            return Err(Error::parse(
                SOURCE,
                line,
                format!(
                    "pixel ({x}, {y}) out of bounds for {}x{} sensor",
                    self.width, self.height
                ),
            ));
        }
        let polarity = match fields[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    SOURCE,
                    line,
                    format!("polarity must be 0 or 1, found {other:?}"),
                ))
            }
        };
        if t < self.last_t {
            self.non_monotonic += 1;
            self.first_non_monotonic.get_or_insert(line);
        }
        self.last_t = t;
        Ok(Event {
            t,
            x: x as u16,
            y: y as u16,
            polarity,
        })
    }
}

impl<R: BufRead> Iterator for EventLines<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::parse(SOURCE, self.line_no + 1, e.to_string()))),
            };
            self.line_no += 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            return Some(self.parse_line(&fields));
        }
    }
}

/// Parses a whole `events.txt` stream in file order.
pub fn parse_events<R: BufRead>(reader: R, width: usize, height: usize) -> Result<Parsed<Vec<Event>>> {
    let mut lines = EventLines::new(reader, width, height);
    let events = lines.by_ref().collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    if let Some(line) = lines.first_non_monotonic {
        let message = format!("{} non-monotonic timestamps", lines.non_monotonic);
        log::warn!("{SOURCE}:{line}: {message}");
        warnings.push(Warning { line, message });
    }
    Ok(Parsed {
        value: events,
        warnings,
    })
}

/// Renders events in the `t x y p` text format. Timestamps use nine
/// decimals (nanoseconds).
pub fn format_events(events: &[Event]) -> String {
    let mut out = String::with_capacity(events.len() * 24);
    for ev in events {
        let _ = writeln!(out, "{:.9} {} {} {}", ev.t, ev.x, ev.y, ev.polarity as u8);
    }
    out
}

pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    for ev in events {
        writeln!(w, "{:.9} {} {} {}", ev.t, ev.x, ev.y, ev.polarity as u8)?;
    }
    Ok(())
}
