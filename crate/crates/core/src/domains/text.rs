//! Shared helpers for the line-oriented instance formats.
//!
//! Blank lines and lines starting with `#` are ignored. Each remaining line is
//! a keyword followed by whitespace-separated fields.

use crate::error::{CoreError, Result};

/// Shortest text that parses back to the same `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v}")
}

pub struct Lines<'a> {
    items: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .map(|(i, l)| (i, l.split_whitespace().collect()))
            .collect();
        Self { items, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.items.last().map_or(1, |(l, _)| *l)
    }

    pub fn expect_header(&mut self, header: &str) -> Result<()> {
        let want: Vec<&str> = header.split_whitespace().collect();
        match self.items.get(self.pos) {
            Some((_, f)) if *f == want => {
                self.pos += 1;
                Ok(())
            }
            Some((ln, _)) => Err(CoreError::Parse {
                line: *ln,
                msg: format!("expected header '{header}'"),
            }),
            None => Err(CoreError::Parse {
                line: 1,
                msg: format!("empty input, expected header '{header}'"),
            }),
        }
    }

    /// Next line, which must start with `key`; returns its line number and
    /// the remaining fields.
    pub fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.next_keyed(key)? {
            Some(x) => Ok(x),
            None => Err(CoreError::Parse {
                line: self.items.get(self.pos).map_or(self.last_line(), |(l, _)| *l),
                msg: format!("expected '{key}'"),
            }),
        }
    }

    /// Like [`keyed`](Self::keyed) but returns `None` when the next line has
    /// another keyword or input is exhausted.
    pub fn next_keyed(&mut self, key: &str) -> Result<Option<(usize, Vec<&'a str>)>> {
        match self.items.get(self.pos) {
            Some((ln, f)) if f[0] == key => {
                self.pos += 1;
                Ok(Some((*ln, f[1..].to_vec())))
            }
            _ => Ok(None),
        }
    }

    pub fn expect_end(&self) -> Result<()> {
        match self.items.get(self.pos) {
            None => Ok(()),
            Some((ln, f)) => Err(CoreError::Parse {
                line: *ln,
                msg: format!("unexpected '{}'", f[0]),
            }),
        }
    }

    pub fn real_at(line: usize, fields: &[&str], i: usize) -> Result<f64> {
        let s = fields.get(i).ok_or_else(|| CoreError::Parse {
            line,
            msg: format!("missing field {}", i + 1),
        })?;
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CoreError::Parse {
                line,
                msg: format!("'{s}' is not a finite number"),
            })
    }

    pub fn int_at(line: usize, fields: &[&str], i: usize) -> Result<usize> {
        let s = fields.get(i).ok_or_else(|| CoreError::Parse {
            line,
            msg: format!("missing field {}", i + 1),
        })?;
        s.parse::<usize>().map_err(|_| CoreError::Parse {
            line,
            msg: format!("'{s}' is not a nonnegative integer"),
        })
    }

    pub fn signed_at(line: usize, fields: &[&str], i: usize) -> Result<i64> {
        let s = fields.get(i).ok_or_else(|| CoreError::Parse {
            line,
            msg: format!("missing field {}", i + 1),
        })?;
        s.parse::<i64>().map_err(|_| CoreError::Parse {
            line,
            msg: format!("'{s}' is not an integer"),
        })
    }
}
