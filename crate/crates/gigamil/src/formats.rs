//! On-disk artifacts. Every writer goes through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gigamil_core::milnet::{MilArch, MilModel};
use gigamil_core::mrivol::{MriArch, MriClassifier, Volume4D, MODALITIES};
use gigamil_core::numkern::{Adam, AdamConfig, AdamMoments};
use gigamil_core::slidepyr::{ChannelStats, RasterImage};
use gigamil_core::ClassLabel;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("serializable value");
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("serializable row");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| CliError::format(path, e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// Class labels serialize as their letter, "A", "O" or "G".
mod label {
    use gigamil_core::ClassLabel;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(l: &ClassLabel, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(l.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ClassLabel, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

mod opt_label {
    use gigamil_core::ClassLabel;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(l: &Option<ClassLabel>, s: S) -> Result<S::Ok, S::Error> {
        match l {
            Some(l) => super::label::serialize(l, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ClassLabel>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::label")] ClassLabel);
        Ok(Option::<Wrap>::deserialize(d)?.map(|Wrap(l)| l))
    }
}

// ---- slides and tiles ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideSidecar {
    pub slide_id: String,
    pub native_mpp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_label")]
    pub label: Option<ClassLabel>,
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(rgb.len() + 20);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(rgb, width as u32, height as u32, ExtendedColorType::Rgb8)
        .expect("in-memory PPM encoding");
    out
}

/// Decodes a PPM into `(width, height, rgb)`.
pub fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| CliError::format(path, e.to_string()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw()))
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    write_atomic(path, &encode_ppm(width, height, rgb))
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    decode_ppm(path, &read_bytes(path)?)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_slide(path: &Path, image: &RasterImage, sidecar: &SlideSidecar) -> Result<()> {
    write_ppm(path, image.width, image.height, &image.pixels)?;
    write_json(&sidecar_path(path), sidecar)
}

pub fn read_slide(path: &Path) -> Result<(RasterImage, SlideSidecar)> {
    let side: SlideSidecar = read_json(&sidecar_path(path))?;
    let (w, h, px) = read_ppm(path)?;
    let img = RasterImage::new(w, h, px, side.native_mpp).map_err(|e| CliError::format(path, e.to_string()))?;
    Ok((img, side))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub row: usize,
    pub col: usize,
    pub is_background: bool,
}

pub fn tile_file_name(row: usize, col: usize) -> String {
    format!("r{row}_c{col}.ppm")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl From<ChannelStats> for StatsFile {
    fn from(s: ChannelStats) -> Self {
        StatsFile { mean: s.mean, std: s.std }
    }
}

impl From<StatsFile> for ChannelStats {
    fn from(s: StatsFile) -> Self {
        ChannelStats { mean: s.mean, std: s.std }
    }
}

// ---- volumes ----

pub const VOLUME_MAGIC: &[u8; 8] = b"VOL4D001";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSidecar {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_label")]
    pub label: Option<ClassLabel>,
}

pub fn encode_volume(v: &Volume4D) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + v.data().len() * 8);
    out.extend_from_slice(VOLUME_MAGIC);
    let [d, h, w] = v.extents();
    for e in [MODALITIES, d, h, w] {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_volume(path: &Path, bytes: &[u8]) -> Result<Volume4D> {
    if bytes.len() < 24 || &bytes[..8] != VOLUME_MAGIC {
        return Err(CliError::format(path, "not a VOL4D001 volume"));
    }
    let ext: Vec<usize> = bytes[8..24]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    if ext[0] != MODALITIES {
        return Err(CliError::format(path, format!("expected {MODALITIES} modalities, found {}", ext[0])));
    }
    let body = &bytes[24..];
    let want = ext.iter().product::<usize>() * 8;
    if body.len() != want {
        return Err(CliError::format(path, format!("voxel payload is {} bytes, expected {want}", body.len())));
    }
    let data = f64s(body);
    Volume4D::new([ext[1], ext[2], ext[3]], data).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_volume(path: &Path, v: &Volume4D, sidecar: &VolumeSidecar) -> Result<()> {
    write_atomic(path, &encode_volume(v))?;
    write_json(&sidecar_path(path), sidecar)
}

pub fn read_volume(path: &Path) -> Result<(Volume4D, VolumeSidecar)> {
    let side: VolumeSidecar = read_json(&sidecar_path(path))?;
    Ok((decode_volume(path, &read_bytes(path)?)?, side))
}

// ---- checkpoints ----

pub const MILNET_MAGIC: &[u8; 8] = b"MILNET01";
pub const MRIVOL_MAGIC: &[u8; 8] = b"MRIVOL01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_balanced_accuracy: f64,
    pub mpp: Option<f64>,
    pub modality: String,
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

fn u64_at(bytes: &[u8], i: usize) -> u64 {
    u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes"))
}

fn push_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Magic, then `L, H, C` as u64 and the dropout rate as f64, then the parameters.
pub fn encode_milnet(model: &MilModel) -> Vec<u8> {
    let arch = model.arch();
    let params = model.param_vector();
    let mut out = Vec::with_capacity(40 + params.len() * 8);
    out.extend_from_slice(MILNET_MAGIC);
    for v in [arch.latent, arch.hidden, arch.classes] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&arch.dropout.to_le_bytes());
    push_f64s(&mut out, &params);
    out
}

pub fn decode_milnet(path: &Path, bytes: &[u8]) -> Result<MilModel> {
    const HEADER: usize = 40;
    if bytes.len() < HEADER || &bytes[..8] != MILNET_MAGIC || (bytes.len() - HEADER) % 8 != 0 {
        return Err(CliError::format(path, "not a MILNET01 checkpoint"));
    }
    let (latent, hidden, classes) = (u64_at(bytes, 0) as usize, u64_at(bytes, 1) as usize, u64_at(bytes, 2) as usize);
    let dropout = f64::from_le_bytes(bytes[32..40].try_into().expect("8 bytes"));
    let params = f64s(&bytes[HEADER..]);
    let input_len = MilArch::input_len_from_params(hidden, latent, classes, params.len())
        .ok_or_else(|| CliError::format(path, "parameter count does not match the descriptor"))?;
    let arch = MilArch {
        input_len,
        hidden,
        latent,
        classes,
        dropout,
    };
    let mut model = MilModel::init(&arch, 0).map_err(|e| CliError::format(path, e.to_string()))?;
    model.set_param_vector(&params)?;
    Ok(model)
}

/// Magic, then `Cin, Cout, k, stride, padding, C` as u64, then the parameters.
pub fn encode_mrivol(model: &MriClassifier) -> Vec<u8> {
    let a = model.arch();
    let params = model.param_vector();
    let mut out = Vec::with_capacity(56 + params.len() * 8);
    out.extend_from_slice(MRIVOL_MAGIC);
    for v in [a.in_channels, a.out_channels, a.kernel, a.stride, a.padding, a.classes] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    push_f64s(&mut out, &params);
    out
}

pub fn decode_mrivol(path: &Path, bytes: &[u8]) -> Result<MriClassifier> {
    const HEADER: usize = 56;
    if bytes.len() < HEADER || &bytes[..8] != MRIVOL_MAGIC {
        return Err(CliError::format(path, "not an MRIVOL01 checkpoint"));
    }
    let f = |i| u64_at(bytes, i) as usize;
    let arch = MriArch {
        in_channels: f(0),
        out_channels: f(1),
        kernel: f(2),
        stride: f(3),
        padding: f(4),
        classes: f(5),
    };
    if bytes.len() != HEADER + 8 * arch.param_count() {
        return Err(CliError::format(path, "parameter count does not match the descriptor"));
    }
    let mut model = MriClassifier::init(&arch, 0).map_err(|e| CliError::format(path, e.to_string()))?;
    model.set_param_vector(&f64s(&bytes[HEADER..]))?;
    Ok(model)
}

// ---- resumable optimizer state ----

pub const RESUME_MAGIC: &[u8; 8] = b"GMRESUM1";

/// Parameters plus Adam state after `epochs_done` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumeState {
    pub epochs_done: usize,
    pub params: Vec<f64>,
    pub adam: Adam,
}

pub fn encode_resume(state: &ResumeState) -> Vec<u8> {
    let moments = state.adam.moments();
    let mut out = Vec::new();
    out.extend_from_slice(RESUME_MAGIC);
    out.extend_from_slice(&(state.epochs_done as u64).to_le_bytes());
    out.extend_from_slice(&state.adam.steps_taken().to_le_bytes());
    out.extend_from_slice(&(moments.len() as u64).to_le_bytes());
    for m in moments {
        out.extend_from_slice(&(m.m.len() as u64).to_le_bytes());
    }
    push_f64s(&mut out, &state.params);
    for m in moments {
        push_f64s(&mut out, &m.m);
        push_f64s(&mut out, &m.v);
    }
    out
}

pub fn decode_resume(path: &Path, bytes: &[u8], config: AdamConfig) -> Result<ResumeState> {
    let bad = || CliError::format(path, "truncated or foreign resume state");
    if bytes.len() < 32 || &bytes[..8] != RESUME_MAGIC {
        return Err(bad());
    }
    let epochs_done = u64_at(bytes, 0) as usize;
    let steps = u64_at(bytes, 1);
    let tensors = u64_at(bytes, 2) as usize;
    let header = 32 + 8 * tensors;
    if bytes.len() < header {
        return Err(bad());
    }
    let sizes: Vec<usize> = (0..tensors).map(|i| u64_at(bytes, 3 + i) as usize).collect();
    let total: usize = sizes.iter().sum();
    if bytes.len() != header + 24 * total {
        return Err(bad());
    }
    let body = f64s(&bytes[header..]);
    let params = body[..total].to_vec();
    let mut offset = total;
    let mut moments = Vec::with_capacity(tensors);
    for n in sizes {
        let m = body[offset..offset + n].to_vec();
        let v = body[offset + n..offset + 2 * n].to_vec();
        offset += 2 * n;
        moments.push(AdamMoments { m, v });
    }
    Ok(ResumeState {
        epochs_done,
        params,
        adam: Adam::from_state(config, steps, moments),
    })
}

// ---- dataset, ensemble and predictions ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub case_id: String,
    #[serde(with = "label")]
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    /// Path relative to the manifest's directory.
    pub checkpoint: String,
    pub modality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpp: Option<f64>,
    pub val_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub members: Vec<ManifestMember>,
    pub prune_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub case_id: String,
    #[serde(with = "label")]
    pub label: ClassLabel,
    pub probabilities: [f64; 3],
    pub member_probs: std::collections::BTreeMap<String, [f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub balanced_accuracy: f64,
    pub kappa: f64,
    pub f1_micro: f64,
    pub confusion: Vec<Vec<u64>>,
}
