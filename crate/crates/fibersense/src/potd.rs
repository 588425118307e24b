//! POTD v1 waterfall recordings.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "POTD"
//!      4     2  version = 1
//!      6     2  reserved = 0
//!      8     4  n_bins (u32)
//!     12     4  bin_size_m (f32)
//!     16     4  pulse_rate_hz (f32)
//!     20     8  n_traces (u64, 0 when unknown)
//!     28        n_traces rows of n_bins f32 samples
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use fibersense_core::sim::{FiberLayout, WaterfallBlock};

pub const MAGIC: [u8; 4] = *b"POTD";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 28;
const N_TRACES_OFFSET: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotdHeader {
    pub n_bins: u32,
    pub bin_size_m: f32,
    pub pulse_rate_hz: f32,
    /// Declared trace count, 0 when the writer did not know it.
    pub n_traces: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum FormatErrorKind {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("reserved field is {0}, expected 0")]
    Reserved(u16),
    #[error("invalid header field: {0}")]
    Header(&'static str),
    #[error("file ends inside the header")]
    TruncatedHeader,
    #[error("partial row: {have} of {need} bytes")]
    PartialRow { have: usize, need: usize },
    #[error("header declares {declared} traces, file holds {found}")]
    MissingTraces { declared: u64, found: u64 },
    #[error("non-finite sample")]
    NonFinite,
    #[error("recording is {n_bins} x {bin_size_m} m at {pulse_rate_hz} Hz, layout differs")]
    LayoutMismatch { n_bins: u32, bin_size_m: f32, pulse_rate_hz: f32 },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// A malformed recording, with the byte offset where the problem starts.
#[derive(Debug, thiserror::Error)]
#[error("POTD format error at byte {offset}: {kind}")]
pub struct FormatError {
    pub offset: u64,
    pub kind: FormatErrorKind,
}

impl FormatError {
    fn at(offset: u64, kind: FormatErrorKind) -> Self {
        Self { offset, kind }
    }
}

impl PotdHeader {
    pub fn for_layout(layout: &FiberLayout, n_traces: u64) -> Self {
        Self {
            n_bins: layout.n_bins() as u32,
            bin_size_m: layout.bin_size_m() as f32,
            pulse_rate_hz: layout.pulse_rate_hz() as f32,
            n_traces,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[8..12].copy_from_slice(&self.n_bins.to_le_bytes());
        b[12..16].copy_from_slice(&self.bin_size_m.to_le_bytes());
        b[16..20].copy_from_slice(&self.pulse_rate_hz.to_le_bytes());
        b[20..28].copy_from_slice(&self.n_traces.to_le_bytes());
        b
    }

    pub fn parse(b: &[u8; HEADER_LEN as usize]) -> Result<Self, FormatError> {
        let magic: [u8; 4] = b[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::at(0, FormatErrorKind::BadMagic(magic)));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(FormatError::at(4, FormatErrorKind::Version(version)));
        }
        let reserved = u16::from_le_bytes([b[6], b[7]]);
        if reserved != 0 {
            return Err(FormatError::at(6, FormatErrorKind::Reserved(reserved)));
        }
        let h = Self {
            n_bins: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            bin_size_m: f32::from_le_bytes(b[12..16].try_into().unwrap()),
            pulse_rate_hz: f32::from_le_bytes(b[16..20].try_into().unwrap()),
            n_traces: u64::from_le_bytes(b[20..28].try_into().unwrap()),
        };
        if h.n_bins == 0 {
            return Err(FormatError::at(8, FormatErrorKind::Header("n_bins is zero")));
        }
        if !(h.bin_size_m.is_finite() && h.bin_size_m > 0.0) {
            return Err(FormatError::at(12, FormatErrorKind::Header("bin_size_m must be positive")));
        }
        if !(h.pulse_rate_hz.is_finite() && h.pulse_rate_hz > 0.0) {
            return Err(FormatError::at(16, FormatErrorKind::Header("pulse_rate_hz must be positive")));
        }
        Ok(h)
    }

    fn row_bytes(&self) -> usize {
        self.n_bins as usize * 4
    }

    /// Whether recordings with this header can be processed under `layout`.
    pub fn matches(&self, layout: &FiberLayout) -> bool {
        let own = Self::for_layout(layout, self.n_traces);
        own.n_bins == self.n_bins && own.bin_size_m == self.bin_size_m && own.pulse_rate_hz == self.pulse_rate_hz
    }
}

/// Streams traces into a recording. Samples are stored as `f32`.
pub struct PotdWriter<W: Write> {
    inner: W,
    header: PotdHeader,
    traces: u64,
    row: Vec<u8>,
}

impl<W: Write> PotdWriter<W> {
    pub fn new(mut inner: W, header: PotdHeader) -> io::Result<Self> {
        inner.write_all(&header.to_bytes())?;
        Ok(Self { inner, row: Vec::with_capacity(header.row_bytes()), header, traces: 0 })
    }

    pub fn header(&self) -> &PotdHeader {
        &self.header
    }

    pub fn traces_written(&self) -> u64 {
        self.traces
    }

    pub fn write_trace(&mut self, trace: &[f64]) -> io::Result<()> {
        if trace.len() != self.header.n_bins as usize {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "trace width differs from header n_bins"));
        }
        self.row.clear();
        for &v in trace {
            self.row.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.inner.write_all(&self.row)?;
        self.traces += 1;
        Ok(())
    }

    pub fn write_block(&mut self, block: &WaterfallBlock) -> io::Result<()> {
        block.rows().try_for_each(|r| self.write_trace(r))
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }

    /// Flushes and returns the sink without touching the header.
    pub fn into_inner(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

impl<W: Write + Seek> PotdWriter<W> {
    /// Rewrites the header trace count to the number of traces written.
    pub fn finalize(mut self) -> io::Result<W> {
        self.inner.flush()?;
        let end = self.inner.stream_position()?;
        self.inner.seek(SeekFrom::Start(N_TRACES_OFFSET))?;
        self.inner.write_all(&self.traces.to_le_bytes())?;
        self.inner.seek(SeekFrom::Start(end))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Creates a recording file for `layout` (trace count patched on finalize).
pub fn create(path: &Path, layout: &FiberLayout) -> io::Result<PotdWriter<BufWriter<File>>> {
    PotdWriter::new(BufWriter::new(File::create(path)?), PotdHeader::for_layout(layout, 0))
}

/// Reads a recording block by block.
pub struct PotdReader<R: Read> {
    inner: R,
    header: PotdHeader,
    offset: u64,
    traces: u64,
    buf: Vec<u8>,
}

impl PotdReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, FormatError> {
        let f = File::open(path).map_err(|e| FormatError::at(0, e.into()))?;
        Self::new(BufReader::with_capacity(1 << 20, f))
    }
}

impl<R: Read> PotdReader<R> {
    pub fn new(mut inner: R) -> Result<Self, FormatError> {
        let mut b = [0u8; HEADER_LEN as usize];
        let got = read_full(&mut inner, &mut b).map_err(|e| FormatError::at(0, e.into()))?;
        if got < b.len() {
            return Err(FormatError::at(got as u64, FormatErrorKind::TruncatedHeader));
        }
        let header = PotdHeader::parse(&b)?;
        Ok(Self { inner, header, offset: HEADER_LEN, traces: 0, buf: Vec::new() })
    }

    pub fn header(&self) -> &PotdHeader {
        &self.header
    }

    pub fn traces_read(&self) -> u64 {
        self.traces
    }

    /// Fails with [`FormatErrorKind::LayoutMismatch`] unless the recording
    /// geometry equals `layout`'s.
    pub fn check_layout(&self, layout: &FiberLayout) -> Result<(), FormatError> {
        if self.header.matches(layout) {
            Ok(())
        } else {
            let h = self.header;
            Err(FormatError::at(
                8,
                FormatErrorKind::LayoutMismatch {
                    n_bins: h.n_bins,
                    bin_size_m: h.bin_size_m,
                    pulse_rate_hz: h.pulse_rate_hz,
                },
            ))
        }
    }

    /// Reads up to `max_traces` traces. Returns `None` at a clean end of the
    /// recording. Block timestamps continue from the previous block.
    pub fn read_block(&mut self, max_traces: usize) -> Result<Option<WaterfallBlock>, FormatError> {
        let row = self.header.row_bytes();
        let declared = self.header.n_traces;
        let mut want = max_traces.max(1);
        if declared > 0 {
            want = want.min((declared - self.traces) as usize);
            if want == 0 {
                return Ok(None);
            }
        }
        self.buf.resize(want * row, 0);
        let got = read_full(&mut self.inner, &mut self.buf).map_err(|e| FormatError::at(self.offset, e.into()))?;
        let full_rows = got / row;
        let partial = got % row;
        if partial != 0 {
            let at = self.offset + (full_rows * row) as u64;
            return Err(FormatError::at(at, FormatErrorKind::PartialRow { have: partial, need: row }));
        }
        if full_rows < want && declared > 0 {
            let at = self.offset + got as u64;
            return Err(FormatError::at(
                at,
                FormatErrorKind::MissingTraces { declared, found: self.traces + full_rows as u64 },
            ));
        }
        if full_rows == 0 {
            return Ok(None);
        }
        let mut samples = Vec::with_capacity(full_rows * self.header.n_bins as usize);
        for (i, c) in self.buf[..got].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::at(self.offset + 4 * i as u64, FormatErrorKind::NonFinite));
            }
            samples.push(f64::from(v));
        }
        let t0 = self.traces as f64 / f64::from(self.header.pulse_rate_hz);
        self.offset += got as u64;
        self.traces += full_rows as u64;
        let block = WaterfallBlock::new(t0, full_rows, self.header.n_bins as usize, samples)
            .expect("rows are complete and finite");
        Ok(Some(block))
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn small_layout_header(n_traces: u64) -> PotdHeader {
        PotdHeader { n_bins: 3, bin_size_m: 1.0, pulse_rate_hz: 1000.0, n_traces }
    }

    fn recording(traces: &[[f64; 3]], declared: u64) -> Vec<u8> {
        let mut w = PotdWriter::new(Vec::new(), small_layout_header(declared)).unwrap();
        for t in traces {
            w.write_trace(t).unwrap();
        }
        w.into_inner().unwrap()
    }

    #[test]
    fn header_is_28_bytes_le() {
        let b = small_layout_header(7).to_bytes();
        assert_eq!(&b[0..4], b"POTD");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[3, 0, 0, 0]);
        assert_eq!(&b[20..28], &[7, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(PotdHeader::parse(&b).unwrap(), small_layout_header(7));
    }

    #[test]
    fn finalize_patches_trace_count() {
        let mut w = PotdWriter::new(Cursor::new(Vec::new()), small_layout_header(0)).unwrap();
        w.write_trace(&[1.0, 2.0, 3.0]).unwrap();
        w.write_trace(&[4.0, 5.0, 6.0]).unwrap();
        let bytes = w.finalize().unwrap().into_inner();
        assert_eq!(bytes.len(), 28 + 2 * 12);
        let r = PotdReader::new(&bytes[..]).unwrap();
        assert_eq!(r.header().n_traces, 2);
    }

    #[test]
    fn blocks_continue_in_time() {
        let bytes = recording(&[[0.5; 3], [1.5; 3], [2.5; 3]], 0);
        let mut r = PotdReader::new(&bytes[..]).unwrap();
        let a = r.read_block(2).unwrap().unwrap();
        let b = r.read_block(2).unwrap().unwrap();
        assert_eq!((a.n_traces(), a.t0_s()), (2, 0.0));
        assert_eq!((b.n_traces(), b.t0_s()), (1, 0.002));
        assert_eq!(b.samples(), &[2.5; 3]);
        assert!(r.read_block(2).unwrap().is_none());
    }

    #[test]
    fn bad_magic_and_version_name_offsets() {
        let mut bytes = recording(&[[0.0; 3]], 1);
        bytes[0] = b'X';
        let e = PotdReader::new(&bytes[..]).err().unwrap();
        assert_eq!(e.offset, 0);
        assert!(matches!(e.kind, FormatErrorKind::BadMagic(_)));
        let mut bytes = recording(&[[0.0; 3]], 1);
        bytes[4] = 2;
        let e = PotdReader::new(&bytes[..]).err().unwrap();
        assert_eq!(e.offset, 4);
        assert!(matches!(e.kind, FormatErrorKind::Version(2)));
        let e = PotdReader::new(&bytes[..10]).err().unwrap();
        assert!(matches!(e.kind, FormatErrorKind::TruncatedHeader));
    }

    #[test]
    fn partial_row_reports_its_start() {
        let mut bytes = recording(&[[1.0; 3], [2.0; 3]], 0);
        bytes.truncate(bytes.len() - 6);
        let mut r = PotdReader::new(&bytes[..]).unwrap();
        let e = r.read_block(10).err().unwrap();
        assert_eq!(e.offset, 28 + 12);
        assert!(matches!(e.kind, FormatErrorKind::PartialRow { have: 6, need: 12 }));
    }

    #[test]
    fn short_declared_recording_is_an_error() {
        let bytes = recording(&[[1.0; 3]], 2);
        let mut r = PotdReader::new(&bytes[..]).unwrap();
        let e = r.read_block(10).err().unwrap();
        assert_eq!(e.offset, 28 + 12);
        assert!(matches!(e.kind, FormatErrorKind::MissingTraces { declared: 2, found: 1 }));
    }
}
