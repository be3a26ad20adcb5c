//! Pretty JSON with every float written to 17 significant digits.

use std::io;

use mixbma::numfmt::sig17;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Delegates layout to [`PrettyFormatter`] and overrides float output.
/// Non-finite floats never reach the formatter; serde_json writes `null`.
pub struct Sig17Formatter {
    inner: PrettyFormatter<'static>,
}

impl Default for Sig17Formatter {
    fn default() -> Self {
        Self { inner: PrettyFormatter::with_indent(b"  ") }
    }
}

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(sig17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes `value` with [`Sig17Formatter`], newline-terminated.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_17_digits_and_round_trip() {
        let v = vec![0.1, 1.0 / 3.0, 1e-20, f64::NAN];
        let s = to_string(&v).unwrap();
        assert!(s.contains("0.10000000000000001"));
        assert!(s.contains("0.33333333333333331"));
        assert!(s.contains("null"));
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[1], Some(1.0 / 3.0));
        assert_eq!(back[2], Some(1e-20));
    }

    #[test]
    fn layout_is_pretty() {
        #[derive(Serialize)]
        struct T {
            a: Vec<u32>,
            b: f64,
        }
        let s = to_string(&T { a: vec![1, 2], b: 2.0 }).unwrap();
        assert_eq!(s, "{\n  \"a\": [\n    1,\n    2\n  ],\n  \"b\": 2.0000000000000000\n}\n");
    }
}
