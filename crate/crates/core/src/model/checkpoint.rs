//! Versioned binary checkpoint.
//!
//! Layout: magic `VFCKPT01`, format version, a header (dims, ablation flag
//! bits, batch-norm flag, parameter count), the attribute schema, then every
//! trainable tensor as little-endian f32 with its shape, then the batch-norm
//! running statistics.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AblationFlags, Model, ModelConfig, Weights};
use crate::encoder::{AttributeSchema, AttributeSpec, EncoderDims, NormStats, Vocab};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensorio::{BinReader, BinWriter, DType};

pub const MAGIC: &[u8; 8] = b"VFCKPT01";
pub const FORMAT_VERSION: u32 = 1;

/// The fixed-size prefix of a checkpoint, readable without loading tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub parameter_count: u64,
}

impl CheckpointHeader {
    pub fn rep_dim(&self) -> usize {
        self.config.rep_dim()
    }

    fn write<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        let d = &self.config.dims;
        for v in [d.embed, d.proj, d.attr_embed, d.attr_hidden, d.attr_out, d.rep()] {
            w.u32(v as u32)?;
        }
        w.u8(self.config.flags.bits())?;
        w.u8(u8::from(self.config.batch_norm))?;
        w.u64(self.parameter_count)
    }

    fn read<R: Read>(r: &mut BinReader<R>, format_version: u32) -> Result<Self> {
        let mut dims = [0usize; 6];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let encoder = EncoderDims {
            embed: dims[0],
            proj: dims[1],
            attr_embed: dims[2],
            attr_hidden: dims[3],
            attr_out: dims[4],
        };
        if encoder.rep() != dims[5] {
            return Err(Error::Format(format!(
                "checkpoint header D={} disagrees with A+2P={}",
                dims[5],
                encoder.rep()
            )));
        }
        let flags = AblationFlags::from_bits(r.u8()?);
        let batch_norm = r.u8()? != 0;
        let parameter_count = r.u64()?;
        Ok(Self {
            format_version,
            config: ModelConfig {
                dims: encoder,
                flags,
                batch_norm,
            },
            parameter_count,
        })
    }
}

fn write_schema<W: Write>(w: &mut BinWriter<W>, schema: &AttributeSchema) -> Result<()> {
    w.u32(schema.len() as u32)?;
    for (spec, vocab) in schema.specs.iter().zip(&schema.vocabs) {
        w.str(&spec.name)?;
        match &spec.buckets {
            None => w.u32(u32::MAX)?,
            Some(edges) => {
                w.u32(edges.len() as u32)?;
                for &e in edges {
                    w.f64(e)?;
                }
            }
        }
        w.u32(vocab.known().len() as u32)?;
        for t in vocab.known() {
            w.str(t)?;
        }
    }
    Ok(())
}

fn read_schema<R: Read>(r: &mut BinReader<R>) -> Result<AttributeSchema> {
    let n = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n);
    let mut vocabs = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str()?;
        let buckets = match r.u32()? {
            u32::MAX => None,
            k => Some((0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?),
        };
        let k = r.u32()? as usize;
        let tokens = (0..k).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        specs.push(AttributeSpec { name, buckets });
        vocabs.push(Vocab::new(tokens));
    }
    Ok(AttributeSchema::from_parts(specs, vocabs))
}

impl Model {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            config: self.config,
            parameter_count: self.weights.parameter_count() as u64,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check_shapes()?;
        let mut w = BinWriter::new(Vec::new());
        w.header(MAGIC, FORMAT_VERSION)?;
        self.header().write(&mut w)?;
        write_schema(&mut w, &self.schema)?;
        let tensors = self.weights.tensors();
        w.u32(tensors.len() as u32)?;
        for (name, shape, data) in &tensors {
            w.tensor(name, shape, data, DType::F32)?;
        }
        let h = self.norm.mean.len();
        w.tensor("bn_running_mean", &[h], &self.norm.mean, DType::F32)?;
        w.tensor("bn_running_var", &[h], &self.norm.var, DType::F32)?;
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(Cursor::new(bytes));
        let version = r.header(MAGIC)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint format version {version}"
            )));
        }
        let header = CheckpointHeader::read(&mut r, version)?;
        let config = header.config;
        config.validate()?;
        let schema = read_schema(&mut r)?;

        // Shapes come from a freshly shaped template; values are then overwritten.
        let mut weights = template_weights(&config, &schema);
        let expected: Vec<(String, Vec<usize>)> =
            weights.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {count} tensors, configuration needs {}",
                expected.len()
            )));
        }
        for ((name, shape), slot) in expected.iter().zip(weights.tensors_mut()) {
            let data = r.expect_tensor(name, shape)?;
            slot.copy_from_slice(&data);
        }
        let h = config.dims.attr_hidden;
        let norm = NormStats {
            mean: r.expect_tensor("bn_running_mean", &[h])?,
            var: r.expect_tensor("bn_running_var", &[h])?,
        };
        let model = Model {
            config,
            schema,
            weights,
            norm,
        };
        if model.weights.parameter_count() as u64 != header.parameter_count {
            return Err(Error::Format(format!(
                "header parameter count {} does not match tensors ({})",
                header.parameter_count,
                model.weights.parameter_count()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(version_tag(&bytes))
    }

    /// Loads a checkpoint and returns it with its version tag.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_bytes(&bytes)?, version_tag(&bytes)))
    }
}

fn template_weights(config: &ModelConfig, schema: &AttributeSchema) -> Weights {
    let d = config.dims;
    let hidden = d.attr_hidden;
    let z = Matrix::zeros;
    Weights {
        encoder: crate::encoder::EncoderWeights {
            attr_tables: schema.vocabs.iter().map(|v| z(v.len(), d.attr_embed)).collect(),
            attr_w1: z(hidden, schema.len() * d.attr_embed),
            attr_b1: vec![0.0; hidden],
            bn_gamma: vec![0.0; hidden],
            bn_beta: vec![0.0; hidden],
            attr_w2: z(d.attr_out, hidden),
            attr_b2: vec![0.0; d.attr_out],
            title_w: z(d.proj, d.embed),
            title_b: vec![0.0; d.proj],
            body_w: z(d.proj, d.embed),
            body_b: vec![0.0; d.proj],
        },
        bilinear: config
            .flags
            .instant_flow
            .then(|| z(config.rep_dim(), config.rep_dim())),
        head_w: vec![0.0; config.head_dim()],
        head_b: vec![0.0],
    }
}

/// Reads only the header of a checkpoint file.
pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BinReader::new(std::io::BufReader::new(f));
    let version = r.header(MAGIC)?;
    CheckpointHeader::read(&mut r, version)
}

/// Short content hash identifying a checkpoint.
pub fn version_tag(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model(flags: AblationFlags) -> Model {
        let schema = AttributeSchema::from_parts(
            vec![
                AttributeSpec::categorical("category"),
                AttributeSpec {
                    name: "views".into(),
                    buckets: Some(vec![1.0, 10.0]),
                },
            ],
            vec![
                Vocab::new(["news".to_string(), "sports".to_string()]),
                Vocab::new(["b0".to_string(), "b1".to_string(), "b2".to_string()]),
            ],
        );
        let config = ModelConfig {
            dims: EncoderDims {
                embed: 6,
                proj: 3,
                attr_embed: 2,
                attr_hidden: 4,
                attr_out: 2,
            },
            flags,
            batch_norm: true,
        };
        Model::new(config, schema, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    fn round_f32(m: &Model) -> Model {
        let mut m = m.clone();
        for t in m.weights.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        m
    }

    #[test]
    fn round_trip_preserves_f32_values() {
        let mut m = model(AblationFlags::default());
        m.norm.mean = vec![0.1, 0.2, 0.3, 0.4];
        let bytes = m.to_bytes().unwrap();
        let back = Model::from_bytes(&bytes).unwrap();
        let mut expect = round_f32(&m);
        expect.norm.mean = m.norm.mean.iter().map(|v| *v as f32 as f64).collect();
        assert_eq!(back, expect);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn header_reports_ablation_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let full = model(AblationFlags::default());
        let ablated = model(AblationFlags {
            instant_flow: false,
            ..Default::default()
        });
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let tag = full.save(&a).unwrap();
        ablated.save(&b).unwrap();
        assert_eq!(tag.len(), 16);
        let ha = read_header(&a).unwrap();
        let hb = read_header(&b).unwrap();
        assert!(!hb.config.flags.instant_flow);
        assert!(hb.parameter_count < ha.parameter_count);
        assert_eq!(ha.rep_dim(), 8);
    }

    #[test]
    fn corrupt_input_is_a_format_error() {
        let bytes = model(AblationFlags::default()).to_bytes().unwrap();
        assert!(matches!(
            Model::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_bytes(&bad), Err(Error::Format(_))));
    }
}
