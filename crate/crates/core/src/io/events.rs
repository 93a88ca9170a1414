use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{Event, Micros};

use super::{open_input, Output};

pub const BIN_MAGIC: &[u8; 4] = b"EVS1";
const CSV_HEADER: &str = "t,x,y,p";
const BIN_HEADER_LEN: u64 = 8;
const BIN_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    /// `.bin` (optionally `.bin.gz`) selects BIN, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        let name = path.to_string_lossy();
        let name = name.strip_suffix(".gz").unwrap_or(&name);
        if name.ends_with(".bin") {
            EventFormat::Bin
        } else {
            EventFormat::Csv
        }
    }
}

impl std::str::FromStr for EventFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EventFormat::Csv),
            "bin" => Ok(EventFormat::Bin),
            other => Err(format!("unknown event format '{other}' (expected csv or bin)")),
        }
    }
}

/// Shared ordering and bounds validation.
#[derive(Debug, Clone, Copy)]
struct Validator {
    width: u16,
    height: u16,
    last: Option<Micros>,
    records: u64,
}

impl Validator {
    fn check(&mut self, e: Event) -> Result<Event> {
        self.records += 1;
        if e.x >= self.width || e.y >= self.height {
            return Err(Error::OutOfBounds {
                x: e.x as u32,
                y: e.y as u32,
                t: e.t,
                width: self.width as u32,
                height: self.height as u32,
            });
        }
        if let Some(prev) = self.last {
            if e.t < prev {
                return Err(Error::Unordered {
                    record: self.records,
                    timestamp: e.t,
                    previous: prev,
                });
            }
        }
        self.last = Some(e.t);
        Ok(e)
    }
}

pub struct CsvEventReader<R> {
    reader: R,
    line: String,
    offset: u64,
    validator: Validator,
    done: bool,
}

impl<R: BufRead> CsvEventReader<R> {
    /// Reads and checks the header. Events must fit `width x height`.
    pub fn new(mut reader: R, width: u16, height: u16) -> Result<Self> {
        let mut line = String::new();
        let n = reader.read_line(&mut line)?;
        if line.trim_end() != CSV_HEADER {
            return Err(Error::MalformedRecord {
                offset: 0,
                reason: format!("expected header '{CSV_HEADER}', found '{}'", line.trim_end()),
            });
        }
        Ok(Self {
            reader,
            line,
            offset: n as u64,
            validator: Validator {
                width,
                height,
                last: None,
                records: 0,
            },
            done: false,
        })
    }

    fn parse(&self) -> Result<Event> {
        let offset = self.offset;
        let bad = |reason: String| Error::MalformedRecord { offset, reason };
        let mut fields = self.line.trim_end_matches(['\n', '\r']).split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .map(str::trim)
                .ok_or_else(|| bad(format!("missing field '{name}'")))
        };
        let t = next("t")?;
        let x = next("x")?;
        let y = next("y")?;
        let p = next("p")?;
        if fields.next().is_some() {
            return Err(bad("too many fields".into()));
        }
        let t: Micros = t.parse().map_err(|_| bad(format!("bad timestamp '{t}'")))?;
        let x: u16 = x.parse().map_err(|_| bad(format!("bad x '{x}'")))?;
        let y: u16 = y.parse().map_err(|_| bad(format!("bad y '{y}'")))?;
        let polarity = match p {
            "1" | "true" => true,
            "0" | "-1" | "false" => false,
            other => return Err(bad(format!("bad polarity '{other}'"))),
        };
        Ok(Event { t, x, y, polarity })
    }

    fn read_next(&mut self) -> Result<Option<Event>> {
        loop {
            self.line.clear();
            let start = self.offset;
            let n = self.reader.read_line(&mut self.line)?;
            if n == 0 {
                return Ok(None);
            }
            if self.line.trim().is_empty() {
                self.offset += n as u64;
                continue;
            }
            let event = self.parse();
            self.offset = start + n as u64;
            let event = event.map_err(|e| match e {
                Error::MalformedRecord { reason, .. } => Error::MalformedRecord { offset: start, reason },
                other => other,
            })?;
            return self.validator.check(event).map(Some);
        }
    }
}

impl<R: BufRead> Iterator for CsvEventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.read_next().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

pub struct BinEventReader<R> {
    reader: R,
    offset: u64,
    validator: Validator,
    done: bool,
}

impl<R: Read> BinEventReader<R> {
    /// Reads the header; sensor dimensions come from the file.
    pub fn new(mut reader: R) -> Result<Self> {
        let mut header = [0u8; BIN_HEADER_LEN as usize];
        reader.read_exact(&mut header).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::MalformedRecord {
                offset: 0,
                reason: "truncated header".into(),
            },
            _ => Error::Io(e),
        })?;
        if &header[..4] != BIN_MAGIC {
            return Err(Error::MalformedRecord {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let width = u16::from_le_bytes([header[4], header[5]]);
        let height = u16::from_le_bytes([header[6], header[7]]);
        if width == 0 || height == 0 {
            return Err(Error::MalformedRecord {
                offset: 4,
                reason: "zero sensor dimension".into(),
            });
        }
        Ok(Self {
            reader,
            offset: BIN_HEADER_LEN,
            validator: Validator {
                width,
                height,
                last: None,
                records: 0,
            },
            done: false,
        })
    }

    pub fn dims(&self) -> (u16, u16) {
        (self.validator.width, self.validator.height)
    }

    fn read_next(&mut self) -> Result<Option<Event>> {
        let mut rec = [0u8; BIN_RECORD_LEN];
        let mut filled = 0;
        while filled < BIN_RECORD_LEN {
            match self.reader.read(&mut rec[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
        if filled == 0 {
            return Ok(None);
        }
        if filled < BIN_RECORD_LEN {
            return Err(Error::MalformedRecord {
                offset: self.offset,
                reason: format!("truncated record ({filled} of {BIN_RECORD_LEN} bytes)"),
            });
        }
        let t = u64::from_le_bytes(rec[0..8].try_into().expect("8 bytes"));
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let polarity = match rec[12] {
            0 => false,
            1 => true,
            other => {
                return Err(Error::MalformedRecord {
                    offset: self.offset + 12,
                    reason: format!("bad polarity byte {other}"),
                })
            }
        };
        self.offset += BIN_RECORD_LEN as u64;
        self.validator.check(Event { t, x, y, polarity }).map(Some)
    }
}

impl<R: Read> Iterator for BinEventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.read_next().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

/// Either reader over an opened input.
pub enum EventReader {
    Csv(CsvEventReader<Box<dyn BufRead + Send>>),
    Bin(BinEventReader<Box<dyn BufRead + Send>>),
}

impl EventReader {
    /// Sensor dimensions events are validated against.
    pub fn dims(&self) -> (u16, u16) {
        match self {
            EventReader::Csv(r) => (r.validator.width, r.validator.height),
            EventReader::Bin(r) => r.dims(),
        }
    }
}

impl Iterator for EventReader {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            EventReader::Csv(r) => r.next(),
            EventReader::Bin(r) => r.next(),
        }
    }
}

/// Opens an event stream. `format` defaults to the path's extension.
/// CSV carries no geometry, so `dims` bounds its events; BIN uses its
/// header.
pub fn read_events(path: &Path, format: Option<EventFormat>, dims: (u16, u16)) -> Result<EventReader> {
    let input = open_input(path)?;
    match format.unwrap_or_else(|| EventFormat::from_path(path)) {
        EventFormat::Csv => Ok(EventReader::Csv(CsvEventReader::new(input, dims.0, dims.1)?)),
        EventFormat::Bin => Ok(EventReader::Bin(BinEventReader::new(input)?)),
    }
}

pub struct CsvEventWriter<W> {
    inner: W,
}

impl<W: Write> CsvEventWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        writeln!(inner, "{CSV_HEADER}")?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, e: &Event) -> io::Result<()> {
        writeln!(self.inner, "{},{},{},{}", e.t, e.x, e.y, e.polarity as u8)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct BinEventWriter<W> {
    inner: W,
}

impl<W: Write> BinEventWriter<W> {
    pub fn new(mut inner: W, width: u16, height: u16) -> io::Result<Self> {
        inner.write_all(BIN_MAGIC)?;
        inner.write_all(&width.to_le_bytes())?;
        inner.write_all(&height.to_le_bytes())?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, e: &Event) -> io::Result<()> {
        let mut rec = [0u8; BIN_RECORD_LEN];
        rec[0..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.polarity as u8;
        self.inner.write_all(&rec)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub enum EventWriter<W> {
    Csv(CsvEventWriter<W>),
    Bin(BinEventWriter<W>),
}

impl<W: Write> EventWriter<W> {
    pub fn new(inner: W, format: EventFormat, dims: (u16, u16)) -> io::Result<Self> {
        Ok(match format {
            EventFormat::Csv => EventWriter::Csv(CsvEventWriter::new(inner)?),
            EventFormat::Bin => EventWriter::Bin(BinEventWriter::new(inner, dims.0, dims.1)?),
        })
    }

    pub fn write(&mut self, e: &Event) -> io::Result<()> {
        match self {
            EventWriter::Csv(w) => w.write(e),
            EventWriter::Bin(w) => w.write(e),
        }
    }

    pub fn into_inner(self) -> W {
        match self {
            EventWriter::Csv(w) => w.into_inner(),
            EventWriter::Bin(w) => w.into_inner(),
        }
    }
}

/// Writes a whole stream to `path`; returns the number of events written.
pub fn write_events<I>(path: &Path, format: Option<EventFormat>, dims: (u16, u16), events: I) -> Result<u64>
where
    I: IntoIterator<Item = Event>,
{
    let format = format.unwrap_or_else(|| EventFormat::from_path(path));
    let mut writer = EventWriter::new(Output::create(path)?, format, dims)?;
    let mut n = 0;
    for e in events {
        writer.write(&e)?;
        n += 1;
    }
    writer.into_inner().finish()?;
    Ok(n)
}
