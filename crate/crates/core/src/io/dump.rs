//! G2FD feature dumps.
//!
//! Little-endian throughout. Layout:
//!
//! ```text
//! "G2FD"  u32 version = 1
//! u32 H_u, W_u, d_u, H_z, W_z, d_z, n_text, has_attn, has_proj
//! f32 tokens     [H_u * W_u * d_u]
//! f32 latents    [H_z * W_z * d_z]
//! f32 text       [n_text * d_u]        (absent when n_text = 0)
//! f32 attention  [H_u * W_u]           (only when has_attn = 1)
//! f32 projection [d_z * d_u] row-major (only when has_proj = 1)
//! ```
//!
//! The file length must match the header exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{LatentGrid, ProjectionMatrix, TokenGrid};
use crate::guidance::SideInputs;

pub const MAGIC: [u8; 4] = *b"G2FD";
pub const VERSION: u32 = 1;

const HEADER_FIELDS: [&str; 9] = [
    "H_u", "W_u", "d_u", "H_z", "W_z", "d_z", "n_text", "has_attn", "has_proj",
];
pub const HEADER_LEN: usize = 8 + 4 * HEADER_FIELDS.len();

/// Everything a dump carries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub tokens: TokenGrid,
    pub latents: LatentGrid,
    pub side: SideInputs,
    pub projection: Option<ProjectionMatrix>,
}

impl FeatureDump {
    pub fn new(tokens: TokenGrid, latents: LatentGrid) -> Self {
        Self {
            tokens,
            latents,
            side: SideInputs::default(),
            projection: None,
        }
    }

    fn check(&self) -> Result<()> {
        let d_u = self.tokens.dim();
        if let Some(text) = &self.side.text_embeddings {
            if let Some(bad) = text.iter().find(|t| t.len() != d_u) {
                return Err(Error::DimensionMismatch {
                    what: "text embedding dim",
                    expected: d_u,
                    actual: bad.len(),
                });
            }
        }
        if let Some(attn) = &self.side.attention_importance {
            if attn.len() != self.tokens.len() {
                return Err(Error::DimensionMismatch {
                    what: "attention importance length",
                    expected: self.tokens.len(),
                    actual: attn.len(),
                });
            }
        }
        if let Some(p) = &self.projection {
            if p.rows() != self.latents.dim() || p.cols() != d_u {
                return Err(Error::DimensionMismatch {
                    what: "projection shape (rows = d_z, cols = d_u)",
                    expected: self.latents.dim() * d_u,
                    actual: p.rows() * p.cols(),
                });
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.check()?;
        let text: &[Vec<f32>] = self.side.text_embeddings.as_deref().unwrap_or(&[]);
        let attn = self.side.attention_importance.as_deref();
        let header = [
            self.tokens.height(),
            self.tokens.width(),
            self.tokens.dim(),
            self.latents.height(),
            self.latents.width(),
            self.latents.dim(),
            text.len(),
            usize::from(attn.is_some()),
            usize::from(self.projection.is_some()),
        ];
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, v) in HEADER_FIELDS.iter().zip(header) {
            let v = u32::try_from(v).map_err(|_| Error::BadHeaderField {
                field: name,
                reason: format!("{v} does not fit in u32"),
            })?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut put = |xs: &[f32]| out.extend(xs.iter().flat_map(|x| x.to_le_bytes()));
        put(self.tokens.data());
        put(self.latents.data());
        for t in text {
            put(t);
        }
        if let Some(a) = attn {
            put(a);
        }
        if let Some(p) = &self.projection {
            put(p.data());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let actual = bytes.len();
        if actual < 4 {
            return Err(Error::TruncatedFile {
                section: "magic",
                expected: HEADER_LEN,
                actual,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let word = |i: usize, section: &'static str| -> Result<u32> {
            let at = 4 + 4 * i;
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or(Error::TruncatedFile {
                    section,
                    expected: HEADER_LEN,
                    actual,
                })
        };
        let version = word(0, "version")?;
        if version != VERSION {
            return Err(Error::BadVersion { found: version });
        }
        let mut h = [0usize; 9];
        for (i, name) in HEADER_FIELDS.iter().enumerate() {
            h[i] = word(i + 1, name)? as usize;
        }
        let [hu, wu, du, hz, wz, dz, n_text, has_attn, has_proj] = h;
        for (name, v) in HEADER_FIELDS.iter().zip(&h[..6]) {
            if *v == 0 {
                return Err(Error::BadHeaderField {
                    field: name,
                    reason: "must be >= 1".into(),
                });
            }
        }
        for (name, v) in [("has_attn", has_attn), ("has_proj", has_proj)] {
            if v > 1 {
                return Err(Error::BadHeaderField {
                    field: name,
                    reason: format!("flag must be 0 or 1, got {v}"),
                });
            }
        }

        // Section sizes in floats; u128 so hostile headers cannot overflow.
        let n = |a: usize, b: usize, c: usize| a as u128 * b as u128 * c as u128;
        let sections: [(&'static str, u128); 5] = [
            ("tokens", n(hu, wu, du)),
            ("latents", n(hz, wz, dz)),
            ("text", n(n_text, du, 1)),
            ("attention", n(hu, wu, has_attn)),
            ("projection", n(dz, du, has_proj)),
        ];
        let expected = HEADER_LEN as u128 + 4 * sections.iter().map(|s| s.1).sum::<u128>();
        let expected_usize = usize::try_from(expected).unwrap_or(usize::MAX);
        if (actual as u128) < expected {
            let mut end = HEADER_LEN as u128;
            let section = sections
                .iter()
                .find(|(_, len)| {
                    end += 4 * len;
                    end > actual as u128
                })
                .map_or("payload", |s| s.0);
            return Err(Error::TruncatedFile {
                section,
                expected: expected_usize,
                actual,
            });
        }
        if actual as u128 > expected {
            return Err(Error::LengthMismatch {
                expected: expected_usize,
                actual,
            });
        }

        let mut cursor = HEADER_LEN;
        let mut take = |section: &'static str, count: u128| -> Result<Vec<f32>> {
            let count = count as usize;
            let raw = &bytes[cursor..cursor + 4 * count];
            cursor += 4 * count;
            let v: Vec<f32> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { section, index });
            }
            Ok(v)
        };
        let tokens = TokenGrid::new(hu, wu, du, take("tokens", sections[0].1)?)?;
        let latents = LatentGrid::new(hz, wz, dz, take("latents", sections[1].1)?)?;
        let text = take("text", sections[2].1)?;
        let attn = take("attention", sections[3].1)?;
        let proj = take("projection", sections[4].1)?;
        let side = SideInputs {
            text_embeddings: (n_text > 0)
                .then(|| text.chunks_exact(du).map(<[f32]>::to_vec).collect()),
            attention_importance: (has_attn == 1).then_some(attn),
        };
        let projection = if has_proj == 1 {
            Some(ProjectionMatrix::new(dz, du, proj)?)
        } else {
            None
        };
        Ok(Self {
            tokens,
            latents,
            side,
            projection,
        })
    }
}

pub fn read_dump(path: &Path) -> Result<FeatureDump> {
    FeatureDump::decode(&super::read_file(path)?)
}

pub fn write_dump(path: &Path, dump: &FeatureDump) -> Result<()> {
    super::write_atomic(path, &dump.encode()?)
}
