//! Line-oriented stream file.
//!
//! ```text
//! #colf-stream v1<TAB>user:user:8<TAB>item:item:8<TAB>ctx_1:context:8
//! 1<TAB>17<TAB>204<TAB>3<TAB>0
//! 1<TAB>5<TAB>12<TAB>0<TAB>1
//! ```
//!
//! The header lists every field as `name:kind:dim`. Each record is
//! `day, user_id, item_id, comma-separated context ids, label`. Days appear
//! in ascending contiguous order. An empty file is an empty stream.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::sample::{ClickSample, DayPartition, Stream};
use crate::error::{ColfError, Result};
use crate::schema::{FeatureSchema, FieldKind, FieldSpec};

pub const STREAM_MAGIC: &str = "#colf-stream v1";

fn kind_name(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::User => "user",
        FieldKind::Item => "item",
        FieldKind::Context => "context",
    }
}

pub fn write_stream_to(stream: &Stream, out: impl Write) -> Result<()> {
    let mut out = BufWriter::new(out);
    write!(out, "{STREAM_MAGIC}")?;
    for f in stream.schema.fields() {
        write!(out, "\t{}:{}:{}", f.name, kind_name(f.kind), f.dim)?;
    }
    writeln!(out)?;
    let mut line = String::with_capacity(64);
    for day in &stream.days {
        for s in &day.samples {
            use std::fmt::Write as _;
            line.clear();
            let _ = write!(line, "{}\t{}\t{}\t", s.day, s.user_id, s.item_id);
            for (k, c) in s.context_ids.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{c}");
            }
            let _ = write!(line, "\t{}", s.label);
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_stream(stream: &Stream, path: impl AsRef<Path>) -> Result<()> {
    write_stream_to(stream, File::create(path)?)
}

fn parse_header(line: &str) -> Result<FeatureSchema> {
    let perr = |message: String| ColfError::Parse { line: 1, message };
    let mut parts = line.split('\t');
    if parts.next() != Some(STREAM_MAGIC) {
        return Err(perr(format!("expected header starting with '{STREAM_MAGIC}'")));
    }
    let mut fields = Vec::new();
    for part in parts {
        let bits: Vec<&str> = part.split(':').collect();
        let [name, kind, dim] = bits[..] else {
            return Err(perr(format!("bad field spec '{part}'")));
        };
        let kind = match kind {
            "user" => FieldKind::User,
            "item" => FieldKind::Item,
            "context" => FieldKind::Context,
            other => return Err(perr(format!("unknown field kind '{other}'"))),
        };
        let dim = dim
            .parse()
            .map_err(|_| perr(format!("bad dim '{dim}' for field '{name}'")))?;
        fields.push(FieldSpec::new(name, kind, dim));
    }
    FeatureSchema::new(fields).map_err(|e| perr(e.to_string()))
}

fn parse_record(line: &str, lineno: usize, n_context: usize) -> Result<ClickSample> {
    let perr = |message: String| ColfError::Parse { line: lineno, message };
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 5 {
        return Err(perr(format!("expected 5 tab-separated columns, found {}", cols.len())));
    }
    let num = |col: usize, what: &str| -> Result<u32> {
        cols[col]
            .parse()
            .map_err(|_| perr(format!("bad {what} '{}'", cols[col])))
    };
    let day = num(0, "day")?;
    let user = num(1, "user_id")?;
    let item = num(2, "item_id")?;
    let ctx: Vec<u32> = if cols[3].is_empty() {
        Vec::new()
    } else {
        cols[3]
            .split(',')
            .map(|c| c.parse().map_err(|_| perr(format!("bad context id '{c}'"))))
            .collect::<Result<_>>()?
    };
    if ctx.len() != n_context {
        return Err(perr(format!("expected {n_context} context ids, found {}", ctx.len())));
    }
    let label = match cols[4] {
        "0" => 0,
        "1" => 1,
        other => return Err(perr(format!("label must be 0 or 1, found '{other}'"))),
    };
    Ok(ClickSample::new(day, user, item, &ctx, label))
}

pub fn read_stream_from(input: impl BufRead) -> Result<Stream> {
    let mut lines = input.lines();
    let Some(header) = lines.next() else {
        return Ok(Stream {
            schema: FeatureSchema::ctr(0, 1)?,
            days: Vec::new(),
            catalog: None,
        });
    };
    let schema = parse_header(&header?)?;
    let n_context = schema.n_context();
    let mut days: Vec<DayPartition> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        let sample = parse_record(&line, lineno, n_context)?;
        match days.last_mut() {
            Some(last) if last.day == sample.day => last.samples.push(sample),
            Some(last) if sample.day == last.day + 1 => days.push(DayPartition {
                day: sample.day,
                samples: vec![sample],
            }),
            Some(last) => {
                return Err(ColfError::Parse {
                    line: lineno,
                    message: format!(
                        "day {} follows day {}; days must be ascending and contiguous",
                        sample.day, last.day
                    ),
                })
            }
            None => days.push(DayPartition {
                day: sample.day,
                samples: vec![sample],
            }),
        }
    }
    Stream::new(schema, days)
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<Stream> {
    read_stream_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Stream {
        let schema = FeatureSchema::ctr(2, 8).unwrap();
        let days = vec![
            DayPartition::new(
                1,
                vec![
                    ClickSample::new(1, 3, 9, &[0, 2], 1),
                    ClickSample::new(1, 4, 9, &[1, 0], 0),
                ],
            )
            .unwrap(),
            DayPartition::new(2, vec![ClickSample::new(2, 3, 10, &[3, 1], 0)]).unwrap(),
        ];
        Stream::new(schema, days).unwrap()
    }

    #[test]
    fn round_trip() {
        let s = small();
        let mut buf = Vec::new();
        write_stream_to(&s, &mut buf).unwrap();
        let back = read_stream_from(&buf[..]).unwrap();
        assert_eq!(back.schema, s.schema);
        assert_eq!(back.days, s.days);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let s = read_stream_from(&b""[..]).unwrap();
        assert_eq!(s.n_days(), 0);
    }

    #[test]
    fn truncated_record_names_line() {
        let mut buf = Vec::new();
        write_stream_to(&small(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[2] = "1\t4\t9";
        let err = read_stream_from(lines.join("\n").as_bytes()).unwrap_err();
        assert_eq!(
            err,
            ColfError::Parse {
                line: 3,
                message: "expected 5 tab-separated columns, found 3".into()
            }
        );
    }

    #[test]
    fn non_contiguous_days_fail() {
        let text = format!("{STREAM_MAGIC}\tu:user:2\ti:item:2\n1\t0\t0\t\t1\n3\t0\t0\t\t0\n");
        assert!(matches!(
            read_stream_from(text.as_bytes()),
            Err(ColfError::Parse { line: 3, .. })
        ));
    }
}
