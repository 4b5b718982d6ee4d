//! Checkpoint layout, little-endian:
//!
//! ```text
//! "RNN1"
//! config: u8 cell | u16 input dim | u16 layer count | u16 width per layer
//!         | f64 dropout | u64 seed | f64 learning rate | u32 batch size
//!         | u32 max epochs | u32 patience | f64 tolerance
//! u16 tensor count, then per tensor: u16 rows | u16 cols | rows*cols f64
//! ```
//!
//! Tensors follow [`RnnModel::blocks`] order. Values are stored as f64 so a
//! reloaded model reproduces predictions bit for bit.

use std::io::{Read, Write};

use super::{CellKind, RnnConfig, RnnError, RnnModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RNN1";

pub fn write_checkpoint<W: Write>(model: &RnnModel, mut sink: W) -> Result<(), RnnError> {
    let c = model.config();
    let mut buf = Vec::with_capacity(64 + 8 * model.num_params());
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.push(c.cell.tag());
    buf.extend_from_slice(&(model.input_dim() as u16).to_le_bytes());
    buf.extend_from_slice(&(c.layer_widths.len() as u16).to_le_bytes());
    for &w in &c.layer_widths {
        buf.extend_from_slice(&(w as u16).to_le_bytes());
    }
    buf.extend_from_slice(&c.dropout.to_le_bytes());
    buf.extend_from_slice(&c.seed.to_le_bytes());
    buf.extend_from_slice(&c.learning_rate.to_le_bytes());
    for v in [c.batch_size, c.max_epochs, c.patience] {
        let v = u32::try_from(v).map_err(|_| RnnError::Checkpoint(format!("{v} exceeds u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&c.tolerance.to_le_bytes());
    let blocks = model.blocks();
    buf.extend_from_slice(&(blocks.len() as u16).to_le_bytes());
    for (_, rows, cols, off) in blocks {
        buf.extend_from_slice(&(rows as u16).to_le_bytes());
        buf.extend_from_slice(&(cols as u16).to_le_bytes());
        for v in &model.params()[off..off + rows * cols] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

struct Cursor {
    bytes: Vec<u8>,
    at: usize,
}

impl Cursor {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], RnnError> {
        let end = self.at + N;
        let slice = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| RnnError::Checkpoint(format!("truncated at byte {}", self.at)))?;
        self.at = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<usize, RnnError> {
        Ok(u16::from_le_bytes(self.take()?) as usize)
    }

    fn u32(&mut self) -> Result<usize, RnnError> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }

    fn f64(&mut self) -> Result<f64, RnnError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_checkpoint<R: Read>(mut source: R) -> Result<RnnModel, RnnError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes, at: 0 };
    let magic: [u8; 4] = cur.take()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(RnnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let [tag] = cur.take()?;
    let cell = CellKind::from_tag(tag)
        .ok_or_else(|| RnnError::Checkpoint(format!("unknown cell tag {tag}")))?;
    let input_dim = cur.u16()?;
    let n_layers = cur.u16()?;
    let layer_widths = (0..n_layers).map(|_| cur.u16()).collect::<Result<Vec<_>, _>>()?;
    let config = RnnConfig {
        cell,
        layer_widths,
        dropout: cur.f64()?,
        seed: u64::from_le_bytes(cur.take()?),
        learning_rate: cur.f64()?,
        batch_size: cur.u32()?,
        max_epochs: cur.u32()?,
        patience: cur.u32()?,
        tolerance: cur.f64()?,
    };
    let mut model = RnnModel::zeros(config, input_dim)
        .map_err(|e| RnnError::Checkpoint(format!("config block: {e}")))?;
    let blocks = model.blocks();
    let count = cur.u16()?;
    if count != blocks.len() {
        return Err(RnnError::Checkpoint(format!(
            "{count} tensors, configuration implies {}",
            blocks.len()
        )));
    }
    for (name, rows, cols, off) in blocks {
        let (r, c) = (cur.u16()?, cur.u16()?);
        if (r, c) != (rows, cols) {
            return Err(RnnError::Checkpoint(format!(
                "tensor {name} is {r}x{c}, expected {rows}x{cols}"
            )));
        }
        for i in 0..rows * cols {
            model.params_mut()[off + i] = cur.f64()?;
        }
    }
    if cur.at != cur.bytes.len() {
        return Err(RnnError::Checkpoint(format!(
            "{} trailing bytes",
            cur.bytes.len() - cur.at
        )));
    }
    Ok(model)
}
