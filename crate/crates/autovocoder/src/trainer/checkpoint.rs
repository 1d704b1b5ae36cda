//! Binary checkpoint format ("AVCK", version 1).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "AVCK" | u32 version | u8 dtype (0 = f32, 1 = f64)
//! u64 step | u64 steps_per_epoch
//! u32 len + config text (canonical key = value form)
//! u32 count + tensor entries: generator params, generator buffers,
//!                             discriminator params (enumeration order)
//! u32 count + generator Adam slots  (sorted by name)
//! u32 count + discriminator Adam slots
//! 32-byte RNG seed | u64 RNG stream | u128 RNG word position
//! ```
//!
//! Each tensor entry is `u32 len + name, u32 ndim, u64 dims…, raw scalars`;
//! an Adam slot is `name, u64 t, m tensor, v tensor` (without names).
//! Loading rebuilds the trainer from the embedded config and then overwrites
//! every tensor, so save → load → save reproduces the file byte for byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tensor;

use super::adam::AdamSlot;
use super::Trainer;

const MAGIC: [u8; 4] = *b"AVCK";
const VERSION: u32 = 1;

fn dtype_tag(d: Dtype) -> u8 {
    match d {
        Dtype::F32 => 0,
        Dtype::F64 => 1,
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn tensor<T: Scalar>(&mut self, t: &Tensor<T>) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            v.write_le(&mut self.buf);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "truncated at byte {} (wanted {n} more of {})",
                self.pos,
                self.buf.len()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::CheckpointCorrupt("non-UTF-8 string".into()))
    }

    fn tensor<T: Scalar>(&mut self) -> Result<Tensor<T>> {
        let ndim = self.u32()? as usize;
        if ndim > 8 {
            return Err(Error::CheckpointCorrupt(format!("implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let width = match T::DTYPE {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        };
        let raw = self.take(numel * width)?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        Tensor::from_vec(shape, data)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn write_slot<T: Scalar>(w: &mut Writer, name: &str, slot: &AdamSlot<T>) {
    w.str(name);
    w.u64(slot.t);
    w.tensor(&slot.m);
    w.tensor(&slot.v);
}

fn read_slot<T: Scalar>(r: &mut Reader) -> Result<(String, AdamSlot<T>)> {
    let name = r.str()?;
    let t = r.u64()?;
    let m = r.tensor()?;
    let v = r.tensor()?;
    Ok((name, AdamSlot { t, m, v }))
}

pub fn save<T: Scalar>(trainer: &Trainer<T>, path: &std::path::Path) -> Result<()> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.u8(dtype_tag(T::DTYPE));
    w.u64(trainer.step);
    w.u64(trainer.steps_per_epoch);
    w.str(&trainer.cfg.to_text());

    let mut entries: Vec<(&str, &Tensor<T>)> =
        trainer.model.params().into_iter().map(|p| (p.name(), p.value())).collect();
    entries.extend(trainer.model.buffers());
    if let Some(disc) = &trainer.disc {
        entries.extend(disc.params().into_iter().map(|p| (p.name(), p.value())));
    }
    w.u32(entries.len() as u32);
    for (name, tensor) in entries {
        w.str(name);
        w.tensor(tensor);
    }

    let g_slots = trainer.adam_g.slots_sorted();
    w.u32(g_slots.len() as u32);
    for (name, slot) in g_slots {
        write_slot(&mut w, name, slot);
    }
    let d_slots = trainer.adam_d.slots_sorted();
    w.u32(d_slots.len() as u32);
    for (name, slot) in d_slots {
        write_slot(&mut w, name, slot);
    }

    w.buf.extend_from_slice(&trainer.rng.get_seed());
    w.u64(trainer.rng.get_stream());
    w.u128(trainer.rng.get_word_pos());

    std::fs::write(path, &w.buf)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &std::path::Path) -> Result<Trainer<T>> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes);

    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::CheckpointVersion(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion(format!(
            "file is version {version}, this build reads {VERSION}"
        )));
    }
    let dtype = r.u8()?;
    if dtype != dtype_tag(T::DTYPE) {
        return Err(Error::CheckpointCorrupt(format!(
            "dtype tag {dtype} does not match requested {:?}",
            T::DTYPE
        )));
    }
    let step = r.u64()?;
    let steps_per_epoch = r.u64()?;
    let cfg = RunConfig::parse_text(&r.str()?)?;

    let n_entries = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let name = r.str()?;
        let tensor: Tensor<T> = r.tensor()?;
        entries.push((name, tensor));
    }
    let n_g = r.u32()? as usize;
    let g_slots: Vec<(String, AdamSlot<T>)> =
        (0..n_g).map(|_| read_slot(&mut r)).collect::<Result<_>>()?;
    let n_d = r.u32()? as usize;
    let d_slots: Vec<(String, AdamSlot<T>)> =
        (0..n_d).map(|_| read_slot(&mut r)).collect::<Result<_>>()?;

    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    r.finish()?;

    let mut trainer = Trainer::<T>::new(cfg)?;
    trainer.step = step;
    trainer.steps_per_epoch = steps_per_epoch;

    // Overwrite every tensor in enumeration order, names double-checked.
    let mut it = entries.into_iter();
    let mut restore = |expected: &str, target: &mut Tensor<T>| -> Result<()> {
        let (name, tensor) = it
            .next()
            .ok_or_else(|| Error::CheckpointCorrupt("fewer tensors than the model needs".into()))?;
        if name != expected {
            return Err(Error::UnknownParameter(format!("{name} (expected {expected})")));
        }
        if tensor.shape() != target.shape() {
            return Err(Error::CheckpointCorrupt(format!(
                "{name} has shape {:?}, model wants {:?}",
                tensor.shape(),
                target.shape()
            )));
        }
        *target = tensor;
        Ok(())
    };
    for p in trainer.model.params_mut() {
        let expected = p.name().to_string();
        restore(&expected, p.value_mut())?;
    }
    for (name, buf) in trainer.model.buffers_mut() {
        let expected = name.to_string();
        restore(&expected, buf)?;
    }
    if let Some(disc) = trainer.disc.as_mut() {
        for p in disc.params_mut() {
            let expected = p.name().to_string();
            restore(&expected, p.value_mut())?;
        }
    }
    if it.next().is_some() {
        return Err(Error::CheckpointCorrupt("more tensors than the model has".into()));
    }

    let g_names: std::collections::HashSet<String> =
        trainer.model.params().iter().map(|p| p.name().to_string()).collect();
    for (name, slot) in g_slots {
        if !g_names.contains(&name) {
            return Err(Error::UnknownParameter(format!("optimizer slot {name}")));
        }
        trainer.adam_g.insert_slot(name, slot);
    }
    let d_names: std::collections::HashSet<String> = trainer
        .disc
        .as_ref()
        .map(|d| d.params().iter().map(|p| p.name().to_string()).collect())
        .unwrap_or_default();
    for (name, slot) in d_slots {
        if !d_names.contains(&name) {
            return Err(Error::UnknownParameter(format!("optimizer slot {name}")));
        }
        trainer.adam_d.insert_slot(name, slot);
    }

    trainer.rng = ChaCha8Rng::from_seed(seed);
    trainer.rng.set_stream(stream);
    trainer.rng.set_word_pos(word_pos);
    Ok(trainer)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{tiny_corpus, tiny_run_config};
    use super::*;

    fn trained_trainer(steps: u64) -> Trainer<f64> {
        let mut t = Trainer::<f64>::new(tiny_run_config(true)).unwrap();
        let corpus = tiny_corpus(2, 300);
        t.run(&corpus, steps, |_| {}).unwrap();
        t
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.avck");
        let p2 = dir.path().join("b.avck");
        let t = trained_trainer(2);
        t.save_checkpoint(&p1).unwrap();
        let loaded = Trainer::<f64>::load_checkpoint(&p1).unwrap();
        assert_eq!(loaded.step_count(), 2);
        loaded.save_checkpoint(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.avck");
        trained_trainer(1).save_checkpoint(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[..4].copy_from_slice(b"KCVA");
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            Trainer::<f64>::load_checkpoint(&p),
            Err(Error::CheckpointVersion(_))
        ));
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.avck");
        trained_trainer(1).save_checkpoint(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            Trainer::<f64>::load_checkpoint(&p),
            Err(Error::CheckpointVersion(_))
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.avck");
        trained_trainer(1).save_checkpoint(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        std::fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            Trainer::<f64>::load_checkpoint(&p),
            Err(Error::CheckpointCorrupt(_))
        ));

        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0u8; 3]);
        std::fs::write(&p, &extended).unwrap();
        assert!(matches!(
            Trainer::<f64>::load_checkpoint(&p),
            Err(Error::CheckpointCorrupt(_))
        ));
    }

    #[test]
    fn renamed_parameter_is_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.avck");
        trained_trainer(1).save_checkpoint(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        // The first tensor entry's name is "enc.b00.conv1.weight"; corrupt it.
        let needle = b"enc.b00.conv1.weight";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("first parameter name present");
        bytes[at] = b'x';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            Trainer::<f64>::load_checkpoint(&p),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn wrong_dtype_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.avck");
        trained_trainer(1).save_checkpoint(&p).unwrap();
        assert!(matches!(
            Trainer::<f32>::load_checkpoint(&p),
            Err(Error::CheckpointCorrupt(_))
        ));
    }
}
