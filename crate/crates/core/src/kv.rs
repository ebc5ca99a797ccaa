//! `key = value` configuration text shared by model and generator configs.

use std::fmt::Display;
use std::str::FromStr;

use crate::{Error, Result};

/// One assignment with the line it came from.
pub(crate) struct Entry<'a> {
    pub line: usize,
    pub key: &'a str,
    pub value: &'a str,
}

/// Splits `text` into assignments, skipping blank lines and `#` comments.
pub(crate) fn entries(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        out.push(Entry {
            line: i + 1,
            key: key.trim(),
            value: value.trim(),
        });
    }
    Ok(out)
}

impl Entry<'_> {
    pub fn parse<V: FromStr>(&self) -> Result<V>
    where
        V::Err: Display,
    {
        self.value.parse().map_err(|e| Error::Parse {
            line: self.line,
            message: format!("{}: {e}", self.key),
        })
    }

    pub fn list<V: FromStr>(&self) -> Result<Vec<V>>
    where
        V::Err: Display,
    {
        self.value
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|e| Error::Parse {
                    line: self.line,
                    message: format!("{}: {e}", self.key),
                })
            })
            .collect()
    }

    pub fn unknown(&self) -> Error {
        Error::Parse {
            line: self.line,
            message: format!("unknown key `{}`", self.key),
        }
    }
}

pub(crate) fn join<V: Display>(values: &[V]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let e = entries("# header\n\na = 1 # trailing\n b=2,3 \n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].line, 3);
        assert_eq!(e[0].parse::<u32>().unwrap(), 1);
        assert_eq!(e[1].list::<u32>().unwrap(), vec![2, 3]);
    }

    #[test]
    fn malformed_line_reports_number() {
        match entries("a = 1\nnonsense\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            _ => panic!("expected parse error"),
        }
    }
}
