//! File formats: `OACT` tensor files, checkpoint directories, flat
//! `key = value` files and binary PNM images.

pub mod checkpoint;
pub mod kv;
pub mod oact;
pub mod pnm;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointEntry, Role};
pub use oact::{decode_tensor, encode_tensor, read_tensor, write_tensor};
pub use kv::{parse_value, KvDocument, KvEntry};
