use std::hash::Hasher;
use std::io::{self, BufRead, Read, Write};

use fnv::FnvHasher;
use serde::Serialize;
use slbf::{FilterParams, SlidingFilter, SpaceReport};

use crate::args::{InputFormat, OutputFormat};
use crate::Failure;

/// 64-bit FNV-1a of the token bytes.
pub fn token_key(token: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token);
    h.finish()
}

#[derive(Debug, Serialize)]
pub struct DedupSummary {
    pub schema: &'static str,
    pub params: FilterParams,
    pub seed: u64,
    pub items: u64,
    pub duplicates: u64,
    pub space: SpaceReport,
}

pub struct Dedup<W: Write> {
    filter: SlidingFilter,
    out: W,
    format: OutputFormat,
    quiet: bool,
    items: u64,
    duplicates: u64,
}

impl<W: Write> Dedup<W> {
    pub fn new(filter: SlidingFilter, out: W, format: OutputFormat, quiet: bool) -> Self {
        Dedup {
            filter,
            out,
            format,
            quiet,
            items: 0,
            duplicates: 0,
        }
    }

    fn observe(
        &mut self,
        label: &dyn Fn(&mut W, OutputFormat) -> io::Result<()>,
        key: u64,
    ) -> Result<(), Failure> {
        let seen = self.filter.query(key);
        self.filter
            .insert(key)
            .map_err(|e| Failure::Overflow(e.to_string()))?;
        self.items += 1;
        self.duplicates += u64::from(seen);
        if self.quiet {
            return Ok(());
        }
        if self.items == 1 && self.format == OutputFormat::Tsv {
            writeln!(self.out, "item\tduplicate")?;
        }
        match self.format {
            OutputFormat::Tsv => {
                label(&mut self.out, self.format)?;
                writeln!(self.out, "\t{}", if seen { "yes" } else { "no" })?;
            }
            OutputFormat::Json => {
                write!(self.out, "{{\"item\":")?;
                label(&mut self.out, self.format)?;
                writeln!(self.out, ",\"duplicate\":{seen}}}")?;
            }
        }
        Ok(())
    }

    pub fn run_text<R: BufRead>(&mut self, mut input: R) -> Result<(), Failure> {
        let mut line = Vec::new();
        loop {
            line.clear();
            if input.read_until(b'\n', &mut line)? == 0 {
                return Ok(());
            }
            for token in line
                .split(|b| b.is_ascii_whitespace())
                .filter(|t| !t.is_empty())
            {
                let text = String::from_utf8_lossy(token);
                let label = |w: &mut W, format: OutputFormat| match format {
                    OutputFormat::Tsv => write!(w, "{text}"),
                    OutputFormat::Json => {
                        serde_json::to_writer(&mut *w, &*text).map_err(io::Error::other)
                    }
                };
                self.observe(&label, token_key(token))?;
            }
        }
    }

    pub fn run_binary<R: Read>(&mut self, mut input: R) -> Result<(), Failure> {
        let mut word = [0u8; 8];
        loop {
            let mut filled = 0;
            while filled < 8 {
                match input.read(&mut word[filled..])? {
                    0 if filled == 0 => return Ok(()),
                    0 => {
                        return Err(Failure::Input(format!(
                            "binary input ends with a partial {filled}-byte word"
                        )))
                    }
                    k => filled += k,
                }
            }
            let key = u64::from_le_bytes(word);
            self.observe(&|w: &mut W, _| write!(w, "{key}"), key)?;
        }
    }

    pub fn run<R: BufRead>(&mut self, input: R, format: InputFormat) -> Result<(), Failure> {
        match format {
            InputFormat::Text => self.run_text(input),
            InputFormat::Binary => self.run_binary(input),
        }
    }

    pub fn summary(&self) -> DedupSummary {
        DedupSummary {
            schema: "slbf.dedup/1",
            params: *self.filter.params(),
            seed: self.filter.seed(),
            items: self.items,
            duplicates: self.duplicates,
            space: self.filter.bits_used(),
        }
    }

    pub fn finish(mut self) -> Result<W, Failure> {
        let summary = self.summary();
        match self.format {
            OutputFormat::Tsv => writeln!(
                self.out,
                "# items={}\tduplicates={}\tbits={}",
                summary.items, summary.duplicates, summary.space.total_bits
            )?,
            OutputFormat::Json => {
                serde_json::to_writer(&mut self.out, &serde_json::json!({ "summary": summary }))
                    .map_err(io::Error::other)?;
                writeln!(self.out)?;
            }
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use slbf::Slack;

    fn filter(n: u64) -> SlidingFilter {
        SlidingFilter::new(
            FilterParams::derive(n, Slack::Infinite, 0.001, 1 << 64).unwrap(),
            1,
        )
    }

    #[test]
    fn fnv1a_reference_values() {
        assert_eq!(token_key(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(token_key(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(token_key(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn repeat_in_window_is_flagged() {
        let mut d = Dedup::new(filter(2), Vec::new(), OutputFormat::Tsv, false);
        d.run_text(&b"a b a\n"[..]).unwrap();
        let out = String::from_utf8(d.finish().unwrap()).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[..4], ["item\tduplicate", "a\tno", "b\tno", "a\tyes"]);
        assert!(lines[4].starts_with("# items=3\tduplicates=1\tbits="));
    }

    #[test]
    fn binary_words_and_partial_tail() {
        let mut bytes = Vec::new();
        for x in [7u64, 9, 7] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let mut d = Dedup::new(filter(4), Vec::new(), OutputFormat::Json, false);
        d.run_binary(&bytes[..]).unwrap();
        let out = String::from_utf8(d.finish().unwrap()).unwrap();
        assert!(out.starts_with("{\"item\":7,\"duplicate\":false}\n{\"item\":9,\"duplicate\":false}\n{\"item\":7,\"duplicate\":true}\n"));

        bytes.push(1);
        let mut d = Dedup::new(filter(4), Vec::new(), OutputFormat::Json, true);
        assert!(matches!(d.run_binary(&bytes[..]), Err(Failure::Input(_))));
    }
}
