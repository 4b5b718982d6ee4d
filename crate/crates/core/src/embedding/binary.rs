//! `EMB1` container, little-endian throughout:
//!
//! ```text
//! header: "EMB1" | u8 source tag | u16 layer | u32 record count
//! record: u64 news_id | u16 rows | u16 cols | rows*cols f32, row-major
//! ```

use std::io::{self, Read, Seek, SeekFrom, Write};

use super::{EmbeddingError, EmbeddingSource, HeadlineEmbedding};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const HEADER_LEN: u64 = 11;
const RECORD_PREFIX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileHeader {
    pub source: EmbeddingSource,
    pub layer: u16,
    pub count: u32,
}

impl FileHeader {
    fn to_bytes(self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[..4].copy_from_slice(&MAGIC);
        b[4] = self.source.tag();
        b[5..7].copy_from_slice(&self.layer.to_le_bytes());
        b[7..11].copy_from_slice(&self.count.to_le_bytes());
        b
    }

    fn read_from<R: Read>(reader: &mut R) -> Result<Self, EmbeddingError> {
        let mut b = [0u8; HEADER_LEN as usize];
        let got = read_full(reader, &mut b)?;
        if got >= 4 && b[..4] != MAGIC {
            return Err(EmbeddingError::BadMagic {
                found: [b[0], b[1], b[2], b[3]],
            });
        }
        if got < b.len() {
            return Err(EmbeddingError::HeaderMismatch(format!(
                "header is {got} bytes, expected {HEADER_LEN}"
            )));
        }
        let source = EmbeddingSource::from_tag(b[4])
            .ok_or_else(|| EmbeddingError::HeaderMismatch(format!("unknown source tag {}", b[4])))?;
        let layer = u16::from_le_bytes([b[5], b[6]]);
        if !source.accepts_layer(layer) {
            return Err(EmbeddingError::HeaderMismatch(format!(
                "layer {layer} with {source} source"
            )));
        }
        Ok(Self {
            source,
            layer,
            count: u32::from_le_bytes([b[7], b[8], b[9], b[10]]),
        })
    }
}

// Like read_exact, but reports how many bytes arrived before EOF.
fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Streams records into a sink, tracking byte offsets for the index sidecar.
pub struct EmbeddingWriter<W: Write> {
    sink: W,
    header: FileHeader,
    written: u32,
    offset: u64,
}

impl<W: Write> EmbeddingWriter<W> {
    pub fn new(mut sink: W, header: FileHeader) -> Result<Self, EmbeddingError> {
        if !header.source.accepts_layer(header.layer) {
            return Err(EmbeddingError::HeaderMismatch(format!(
                "layer {} with {} source",
                header.layer, header.source
            )));
        }
        sink.write_all(&header.to_bytes())?;
        Ok(Self {
            sink,
            header,
            written: 0,
            offset: HEADER_LEN,
        })
    }

    /// Appends one record and returns its byte offset.
    pub fn write(&mut self, rec: &HeadlineEmbedding) -> Result<u64, EmbeddingError> {
        if rec.source != self.header.source || rec.layer != self.header.layer {
            return Err(EmbeddingError::HeaderMismatch(format!(
                "record {} is {}/{} in a {}/{} file",
                rec.news_id, rec.source, rec.layer, self.header.source, self.header.layer
            )));
        }
        if self.written == self.header.count {
            return Err(EmbeddingError::HeaderMismatch(format!(
                "more than the declared {} records",
                self.header.count
            )));
        }
        let mut buf = Vec::with_capacity(RECORD_PREFIX + 4 * rec.as_slice().len());
        buf.extend_from_slice(&rec.news_id.to_le_bytes());
        buf.extend_from_slice(&(rec.rows() as u16).to_le_bytes());
        buf.extend_from_slice(&(rec.cols() as u16).to_le_bytes());
        for v in rec.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.sink.write_all(&buf)?;
        let at = self.offset;
        self.offset += buf.len() as u64;
        self.written += 1;
        Ok(at)
    }

    pub fn finish(mut self) -> Result<W, EmbeddingError> {
        if self.written != self.header.count {
            return Err(EmbeddingError::HeaderMismatch(format!(
                "declared {} records, wrote {}",
                self.header.count, self.written
            )));
        }
        self.sink.flush()?;
        Ok(self.sink)
    }
}

/// Writes `records` as one file and returns the `(news_id, offset)` index.
/// Every record must share the first one's source and layer; an empty list
/// produces a static, layer-0 file.
pub fn write_embeddings<W: Write>(
    records: &[HeadlineEmbedding],
    sink: W,
) -> Result<Vec<(u64, u64)>, EmbeddingError> {
    let (source, layer) = records
        .first()
        .map_or((EmbeddingSource::Static, 0), |r| (r.source, r.layer));
    let count = u32::try_from(records.len())
        .map_err(|_| EmbeddingError::Shape("too many records".into()))?;
    let mut w = EmbeddingWriter::new(sink, FileHeader { source, layer, count })?;
    let mut index = Vec::with_capacity(records.len());
    for r in records {
        index.push((r.news_id, w.write(r)?));
    }
    w.finish()?;
    Ok(index)
}

/// Iterates the records of an `EMB1` stream.
pub struct EmbeddingReader<R: Read> {
    source: R,
    header: FileHeader,
    next: u32,
}

impl<R: Read> EmbeddingReader<R> {
    pub fn new(mut source: R) -> Result<Self, EmbeddingError> {
        let header = FileHeader::read_from(&mut source)?;
        Ok(Self {
            source,
            header,
            next: 0,
        })
    }

    pub fn header(&self) -> FileHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<HeadlineEmbedding, EmbeddingError> {
        let record = self.next;
        read_record(&mut self.source, self.header, record)
    }

    /// Confirms that nothing follows the last declared record.
    pub fn finish(mut self) -> Result<(), EmbeddingError> {
        let mut rest = Vec::new();
        self.source.read_to_end(&mut rest)?;
        if rest.is_empty() {
            Ok(())
        } else {
            Err(EmbeddingError::TrailingData { extra: rest.len() })
        }
    }
}

fn read_record<R: Read>(
    source: &mut R,
    header: FileHeader,
    record: u32,
) -> Result<HeadlineEmbedding, EmbeddingError> {
    let mut prefix = [0u8; RECORD_PREFIX];
    if read_full(source, &mut prefix)? < RECORD_PREFIX {
        return Err(EmbeddingError::Truncated { record });
    }
    let news_id = u64::from_le_bytes(prefix[..8].try_into().expect("8 bytes"));
    let rows = u16::from_le_bytes([prefix[8], prefix[9]]) as usize;
    let cols = u16::from_le_bytes([prefix[10], prefix[11]]) as usize;
    if rows == 0 || cols == 0 {
        return Err(EmbeddingError::HeaderMismatch(format!(
            "record {record} declares a {rows}x{cols} matrix"
        )));
    }
    let mut bytes = vec![0u8; 4 * rows * cols];
    if read_full(source, &mut bytes)? < bytes.len() {
        return Err(EmbeddingError::Truncated { record });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    HeadlineEmbedding::new(news_id, header.source, header.layer, rows, cols, data)
}

impl<R: Read> Iterator for EmbeddingReader<R> {
    type Item = Result<HeadlineEmbedding, EmbeddingError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.header.count {
            return None;
        }
        let out = self.read_record();
        // a failed read leaves the stream misaligned; stop afterwards
        self.next = if out.is_ok() { self.next + 1 } else { self.header.count };
        Some(out)
    }
}

/// Reads a whole file, rejecting trailing bytes.
pub fn read_embeddings<R: Read>(
    source: R,
) -> Result<(FileHeader, Vec<HeadlineEmbedding>), EmbeddingError> {
    let mut reader = EmbeddingReader::new(source)?;
    let header = reader.header();
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    reader.finish()?;
    Ok((header, records))
}

/// Random access to one record through an index offset.
pub fn read_record_at<R: Read + Seek>(
    mut source: R,
    offset: u64,
) -> Result<HeadlineEmbedding, EmbeddingError> {
    source.seek(SeekFrom::Start(0))?;
    let header = FileHeader::read_from(&mut source)?;
    if offset < HEADER_LEN {
        return Err(EmbeddingError::HeaderMismatch(format!(
            "offset {offset} points into the header"
        )));
    }
    source.seek(SeekFrom::Start(offset))?;
    read_record(&mut source, header, 0)
}

pub fn write_index<W: Write>(index: &[(u64, u64)], sink: W) -> Result<(), EmbeddingError> {
    let mut w = csv::Writer::from_writer(sink);
    let to_io = |e: csv::Error| EmbeddingError::Io(io::Error::other(e));
    w.write_record(["news_id", "offset"]).map_err(to_io)?;
    for (id, off) in index {
        w.write_record([id.to_string(), off.to_string()]).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index<R: Read>(source: R) -> Result<Vec<(u64, u64)>, EmbeddingError> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let bad = |reason: String| EmbeddingError::Parse { line: i + 2, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", rec.len())));
        }
        let id = rec[0].parse().map_err(|e| bad(format!("news_id: {e}")))?;
        let off = rec[1].parse().map_err(|e| bad(format!("offset: {e}")))?;
        out.push((id, off));
    }
    Ok(out)
}
