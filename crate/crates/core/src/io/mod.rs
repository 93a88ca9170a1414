//! File formats.
//!
//! * events: CSV (`t,x,y,p` header, one integer row per event) or BIN
//!   (`EVS1` magic, `u16` width and height, then 13-byte little-endian
//!   records `u64 t, u16 x, u16 y, u8 p`);
//! * annotations: CSV `frame_t,xmin,ymin,xmax,ymax,label,difficult`;
//! * detections: CSV `t,cluster_id,cx,cy,xmin,ymin,xmax,ymax,vx,vy,ux,uy,s,w`
//!   with six fixed decimals.
//!
//! A path of `-` means stdin/stdout; a `.gz` suffix is (de)compressed
//! transparently.

mod annotations;
mod detections;
mod events;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

pub use annotations::{group_frames, read_annotations, write_annotations, Frame, GroundTruthBox, Rect};
pub use detections::{read_detections, DetectionRecord, DetectionWriter, DETECTION_HEADER};
pub use events::{
    read_events, write_events, BinEventReader, BinEventWriter, CsvEventReader, CsvEventWriter, EventFormat,
    EventReader, EventWriter, BIN_MAGIC,
};

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

/// Opens a file (or stdin for `-`), decompressing `.gz`.
pub fn open_input(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    if is_stdio(path) {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path)?;
    if is_gz(path) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(BufReader::new(file)))))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 16, file)))
    }
}

/// Output file (or stdout for `-`), compressing `.gz`. Call
/// [`finish`](Output::finish) to flush and surface write errors.
pub enum Output {
    Plain(BufWriter<Box<dyn Write + Send>>),
    Gz(GzEncoder<BufWriter<Box<dyn Write + Send>>>),
}

impl Output {
    pub fn create(path: &Path) -> io::Result<Self> {
        let inner: Box<dyn Write + Send> = if is_stdio(path) {
            Box::new(io::stdout())
        } else {
            Box::new(File::create(path)?)
        };
        let buffered = BufWriter::with_capacity(1 << 16, inner);
        if !is_stdio(path) && is_gz(path) {
            Ok(Output::Gz(GzEncoder::new(buffered, Compression::default())))
        } else {
            Ok(Output::Plain(buffered))
        }
    }

    pub fn finish(self) -> io::Result<()> {
        match self {
            Output::Plain(mut w) => w.flush(),
            Output::Gz(gz) => gz.finish()?.flush(),
        }
    }
}

impl Write for Output {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Output::Plain(w) => w.write(buf),
            Output::Gz(w) => w.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Output::Plain(w) => w.flush(),
            Output::Gz(w) => w.flush(),
        }
    }
}
