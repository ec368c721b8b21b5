//! Binary checkpoint format.
//!
//! Little-endian layout: magic `VC2L`, version u32, the model config block,
//! then a u32 tensor count followed by each parameter tensor as
//! (name length u32, name bytes, rank u32, dims u32 x rank, float32 data).
//! Tensors appear in canonical visitor order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EncoderParams, ModelConfig, Pooling, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"VC2L";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<F: Real>(path: &Path, params: &EncoderParams<F>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_config(&mut w, &params.cfg)?;
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, view) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(view.rank() as u32).to_le_bytes())?;
        for dim in view.dims() {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in view.as_slice() {
            w.write_all(&(v.to_f64().unwrap() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<F: Real>(path: &Path) -> Result<EncoderParams<F>> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: CHECKPOINT_MAGIC,
        });
    }
    let version = read_u32(&mut r, path, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let cfg = read_config(&mut r, path)?;
    cfg.validate()?;
    let mut params = EncoderParams::<F>::zeros(&cfg);
    let count = read_u32(&mut r, path, "tensor count")? as usize;
    let mut tensors = params.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            msg: format!("{count} tensors on disk, config implies {}", tensors.len()),
        });
    }
    for (name, view) in tensors.iter_mut() {
        let name_len = read_u32(&mut r, path, "tensor name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, path, "tensor name")?;
        let disk_name = String::from_utf8_lossy(&name_bytes);
        if disk_name != *name {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                msg: format!("tensor {disk_name:?} where {name:?} expected"),
            });
        }
        let rank = read_u32(&mut r, path, "tensor rank")? as usize;
        if rank != view.rank() {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                msg: format!("tensor {name}: rank {rank} vs expected {}", view.rank()),
            });
        }
        let mut elems = 1usize;
        for _ in 0..rank {
            elems *= read_u32(&mut r, path, "tensor dim")? as usize;
        }
        let slice = view.as_slice_mut();
        if elems != slice.len() {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                msg: format!("tensor {name}: {elems} elements vs expected {}", slice.len()),
            });
        }
        let mut buf = [0u8; 4];
        for v in slice.iter_mut() {
            read_exact(&mut r, &mut buf, path, "tensor data")?;
            *v = F::from_f32(f32::from_le_bytes(buf)).unwrap();
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            msg: "trailing bytes after final tensor".into(),
        });
    }
    Ok(params)
}

fn write_config<W: Write>(w: &mut W, cfg: &ModelConfig) -> Result<()> {
    for v in [
        cfg.input_px,
        cfg.patch_px,
        cfg.embed_dim,
        cfg.depth,
        cfg.heads,
        cfg.proj_dim,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&cfg.mlp_ratio.to_le_bytes())?;
    w.write_all(&cfg.temperature.to_le_bytes())?;
    w.write_all(&[cfg.learnable_tau as u8])?;
    w.write_all(&[match cfg.pooling {
        Pooling::ClassToken => 0u8,
        Pooling::MeanPatch => 1u8,
    }])?;
    Ok(())
}

fn read_config<R: Read>(r: &mut R, path: &Path) -> Result<ModelConfig> {
    let input_px = read_u32(r, path, "input_px")? as usize;
    let patch_px = read_u32(r, path, "patch_px")? as usize;
    let embed_dim = read_u32(r, path, "embed_dim")? as usize;
    let depth = read_u32(r, path, "depth")? as usize;
    let heads = read_u32(r, path, "heads")? as usize;
    let proj_dim = read_u32(r, path, "proj_dim")? as usize;
    let mlp_ratio = read_f64(r, path, "mlp_ratio")?;
    let temperature = read_f64(r, path, "temperature")?;
    let mut flags = [0u8; 2];
    read_exact(r, &mut flags, path, "flags")?;
    let pooling = match flags[1] {
        0 => Pooling::ClassToken,
        1 => Pooling::MeanPatch,
        other => {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                msg: format!("unknown pooling tag {other}"),
            })
        }
    };
    Ok(ModelConfig {
        input_px,
        patch_px,
        embed_dim,
        depth,
        heads,
        mlp_ratio,
        proj_dim,
        temperature,
        learnable_tau: flags[0] != 0,
        pooling,
    })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Truncated {
        path: path.to_path_buf(),
        msg: format!("unexpected end of file reading {what}"),
    })
}

fn read_u32<R: Read>(r: &mut R, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R, path: &Path, what: &str) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, path, what)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn f32_round_trip_is_exact() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = EncoderParams::<f32>::init(&cfg, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        write_checkpoint(&path, &params).unwrap();
        let loaded = read_checkpoint::<f32>(&path).unwrap();
        assert_eq!(params, loaded);
        // rewriting produces byte-identical files
        let path2 = dir.path().join("ckpt2.bin");
        write_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn bad_magic_version_and_truncation_are_distinct() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = EncoderParams::<f32>::init(&cfg, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        write_checkpoint(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let bad_magic = dir.path().join("bad_magic.bin");
        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        std::fs::write(&bad_magic, &corrupted).unwrap();
        assert!(matches!(
            read_checkpoint::<f32>(&bad_magic),
            Err(Error::BadMagic { .. })
        ));

        let bad_version = dir.path().join("bad_version.bin");
        let mut corrupted = bytes.clone();
        corrupted[4] = 99;
        std::fs::write(&bad_version, &corrupted).unwrap();
        assert!(matches!(
            read_checkpoint::<f32>(&bad_version),
            Err(Error::UnsupportedVersion { found: 99, .. })
        ));

        let truncated = dir.path().join("truncated.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            read_checkpoint::<f32>(&truncated),
            Err(Error::Truncated { .. })
        ));
    }
}
