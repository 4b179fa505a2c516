//! File formats at the pipeline boundary.
//!
//! * dataset manifest: JSON, paths relative to the manifest's directory
//! * point clouds: ASCII PLY with `x y z` (meters)
//! * depth: raw little-endian f32, row-major, meters; ≤ 0 or non-finite is invalid
//! * masks: 8-bit PNG, nonzero = set
//! * embeddings: JSON array of floats
//! * marker detections and trajectories: JSON lines
//!
//! Every error names the offending file and, where it applies, the record.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose};
use crate::lifting::BinaryMask;
use crate::tracking::{MarkerDetection, SphereModel, TimedPose};
use crate::views::{DepthRaster, FrameRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl IoError {
    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a JSON file, reporting `file:line:column` on failure.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::Record {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        err(e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let text = read_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| IoError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<(), IoError> {
    let mut bytes = Vec::new();
    for v in values {
        serde_json::to_writer(&mut bytes, v).expect("serializable");
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn read_detections(path: &Path) -> Result<Vec<MarkerDetection>, IoError> {
    read_jsonl(path)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TimedPose>, IoError> {
    read_jsonl(path)
}

pub fn read_embedding(path: &Path) -> Result<Vec<f64>, IoError> {
    let v: Vec<f64> = read_json(path)?;
    if v.is_empty() {
        return Err(IoError::format(path, "empty embedding"));
    }
    Ok(v)
}

pub fn read_depth(path: &Path, width: u32, height: u32) -> Result<DepthRaster, IoError> {
    let bytes = read_bytes(path)?;
    let expected = width as usize * height as usize * 4;
    if bytes.len() != expected {
        return Err(IoError::format(
            path,
            format!(
                "{} bytes, expected {expected} for a {width}×{height} f32 raster",
                bytes.len()
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DepthRaster::new(width, height, data).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_depth(path: &Path, raster: &DepthRaster) -> Result<(), IoError> {
    let bytes: Vec<u8> = raster.data().iter().flat_map(|d| d.to_le_bytes()).collect();
    write_atomic(path, &bytes)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, IoError> {
    let img = image::open(path).map_err(|e| IoError::format(path, e.to_string()))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray.pixels().map(|p| p.0[0] != 0).collect();
    BinaryMask::new(w, h, data).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), IoError> {
    let pixels: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width, mask.height, pixels).expect("sized");
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    write_atomic(path, &buf.into_inner())
}

/// Reads the `x y z` columns of an ASCII PLY vertex element.
pub fn read_ply_points(path: &Path) -> Result<Vec<Vector3<f64>>, IoError> {
    let text = read_string(path)?;
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, m: &str| IoError::Record {
        path: path.to_path_buf(),
        line,
        message: m.to_string(),
    };
    if lines.next().map(|l| l.1.trim()) != Some("ply") {
        return Err(bad(1, "missing 'ply' magic"));
    }
    let mut n_vertex = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut elements_before: Vec<(usize, usize)> = Vec::new(); // (count, props) of elements preceding vertex
    let mut pending: Option<(usize, usize)> = None;
    loop {
        let Some((i, line)) = lines.next() else {
            return Err(bad(0, "missing end_header"));
        };
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(bad(i + 1, "only ASCII PLY is supported"));
                }
            }
            ["element", name, count] => {
                let count: usize = count.parse().map_err(|_| bad(i + 1, "bad element count"))?;
                if let Some(p) = pending.take() {
                    if n_vertex.is_none() {
                        elements_before.push(p);
                    }
                }
                in_vertex = *name == "vertex";
                if in_vertex {
                    n_vertex = Some(count);
                } else if n_vertex.is_none() {
                    pending = Some((count, 0));
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(bad(i + 1, "list properties on vertices are not supported"));
                }
            }
            ["property", _, name] => {
                if in_vertex {
                    props.push(name.to_string());
                } else if let Some(p) = pending.as_mut() {
                    p.1 += 1;
                }
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    if !elements_before.is_empty() || pending.is_some() {
        return Err(bad(0, "vertex must be the first element"));
    }
    let n = n_vertex.ok_or_else(|| bad(0, "no vertex element"))?;
    let col = |c: &str| {
        props
            .iter()
            .position(|p| p == c)
            .ok_or_else(|| bad(0, &format!("vertex has no '{c}' property")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let Some((i, line)) = lines.next() else {
            return Err(bad(0, &format!("expected {n} vertices, found {}", pts.len())));
        };
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() < props.len() {
            return Err(bad(i + 1, "too few values"));
        }
        let f = |j: usize| -> Result<f64, IoError> {
            vals[j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(i + 1, &format!("invalid number '{}'", vals[j])))
        };
        pts.push(Vector3::new(f(ix)?, f(iy)?, f(iz)?));
    }
    Ok(pts)
}

/// A colored point for PLY export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub p: Vector3<f64>,
    pub rgb: [u8; 3],
}

pub fn ply_points(points: &[ColoredPoint]) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    );
    for c in points {
        let _ = writeln!(s, "{} {} {} {} {} {}", c.p.x, c.p.y, c.p.z, c.rgb[0], c.rgb[1], c.rgb[2]);
    }
    s
}

/// A line-set vertex; `dir` is exported as `u v w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineVertex {
    pub p: Vector3<f64>,
    pub dir: Vector3<f64>,
    pub rgb: [u8; 3],
}

pub fn ply_lines(vertices: &[LineVertex], edges: &[(usize, usize)]) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property double u\nproperty double v\nproperty double w\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element edge {}\nproperty int vertex1\nproperty int vertex2\nend_header\n",
        vertices.len(),
        edges.len()
    );
    for v in vertices {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            v.p.x, v.p.y, v.p.z, v.dir.x, v.dir.y, v.dir.z, v.rgb[0], v.rgb[1], v.rgb[2]
        );
    }
    for (a, b) in edges {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub frame_id: u64,
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    /// `world←cam`
    pub cam_pose: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    pub instance_id: u64,
    pub label: String,
    pub points: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskEntry {
    pub frame_id: u64,
    /// Instance id of the object the detector was run on.
    pub object_id: u64,
    pub label: String,
    pub score: f64,
    pub mask: PathBuf,
    /// Optional embedding of the element crop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<PathBuf>,
}

/// Embedding of one object's crop in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingEntry {
    pub object_id: u64,
    pub frame_id: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoEntry {
    pub demo_id: String,
    pub frames: Vec<FrameEntry>,
    pub detections: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
    #[serde(default)]
    pub instances: Vec<InstanceEntry>,
    #[serde(default)]
    pub masks: Vec<MaskEntry>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingEntry>,
    #[serde(default)]
    pub demos: Vec<DemoEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere_model: Option<PathBuf>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub path: PathBuf,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let manifest: DatasetManifest = read_json(path)?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let ds = Self {
            root,
            manifest,
            path: path.to_path_buf(),
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn check(&self) -> Result<(), IoError> {
        let m = &self.manifest;
        let fail = |msg: String| Err(IoError::format(&self.path, msg));
        let mut seen = BTreeSet::new();
        for f in &m.frames {
            if !seen.insert(f.frame_id) {
                return fail(format!("duplicate frame id {}", f.frame_id));
            }
            f.intrinsics
                .validate()
                .map_err(|e| IoError::format(&self.path, format!("frame {}: {e}", f.frame_id)))?;
        }
        let mut referenced: Vec<(String, &Path)> = Vec::new();
        for f in &m.frames {
            if let Some(d) = &f.depth {
                referenced.push((format!("frame {} depth", f.frame_id), d));
            }
        }
        for i in &m.instances {
            referenced.push((format!("instance {}", i.instance_id), &i.points));
        }
        for (n, mk) in m.masks.iter().enumerate() {
            if !seen.contains(&mk.frame_id) {
                return fail(format!("mask #{n} refers to unknown frame {}", mk.frame_id));
            }
            if !(0.0..=1.0).contains(&mk.score) {
                return fail(format!("mask #{n} score {} outside [0, 1]", mk.score));
            }
            referenced.push((format!("mask #{n}"), &mk.mask));
            if let Some(e) = &mk.embedding {
                referenced.push((format!("mask #{n} embedding"), e));
            }
        }
        for e in &m.embeddings {
            referenced.push((format!("embedding ({}, {})", e.object_id, e.frame_id), &e.path));
        }
        let mut demo_ids = BTreeSet::new();
        for d in &m.demos {
            if !demo_ids.insert(d.demo_id.as_str()) {
                return fail(format!("duplicate demo id '{}'", d.demo_id));
            }
            let mut ids = BTreeSet::new();
            for f in &d.frames {
                if !ids.insert(f.frame_id) {
                    return fail(format!("demo '{}': duplicate frame id {}", d.demo_id, f.frame_id));
                }
            }
            referenced.push((format!("demo '{}' detections", d.demo_id), &d.detections));
        }
        if let Some(s) = &m.sphere_model {
            referenced.push(("sphere model".into(), s));
        }
        for (what, p) in referenced {
            let full = self.resolve(p);
            if !full.is_file() {
                return fail(format!("{what}: file {} does not exist", full.display()));
            }
        }
        Ok(())
    }

    pub fn load_frame(&self, f: &FrameEntry) -> Result<FrameRecord, IoError> {
        let depth = match &f.depth {
            Some(p) => Some(read_depth(
                &self.resolve(p),
                f.intrinsics.width,
                f.intrinsics.height,
            )?),
            None => None,
        };
        FrameRecord::new(f.frame_id, f.timestamp, f.intrinsics, f.cam_pose, depth)
            .map_err(|e| IoError::format(&self.path, format!("frame {}: {e}", f.frame_id)))
    }

    pub fn load_frames(&self) -> Result<Vec<FrameRecord>, IoError> {
        self.manifest.frames.iter().map(|f| self.load_frame(f)).collect()
    }

    pub fn demo(&self, id: &str) -> Result<&DemoEntry, IoError> {
        self.manifest
            .demos
            .iter()
            .find(|d| d.demo_id == id)
            .ok_or_else(|| IoError::format(&self.path, format!("no demo with id '{id}'")))
    }

    pub fn load_sphere(&self) -> Result<SphereModel, IoError> {
        let p = self
            .manifest
            .sphere_model
            .as_ref()
            .ok_or_else(|| IoError::format(&self.path, "no sphere_model given"))?;
        read_sphere_model(&self.resolve(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerEntry {
    id: u32,
    corners: [[f64; 3]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereFile {
    markers: Vec<MarkerEntry>,
    tip_offset: Pose,
}

pub fn read_sphere_model(path: &Path) -> Result<SphereModel, IoError> {
    let f: SphereFile = read_json(path)?;
    let mut markers = std::collections::BTreeMap::new();
    for m in f.markers {
        if markers
            .insert(m.id, m.corners.map(Vector3::from))
            .is_some()
        {
            return Err(IoError::format(path, format!("duplicate marker id {}", m.id)));
        }
    }
    SphereModel::new(markers, f.tip_offset).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_sphere_model(path: &Path, model: &SphereModel) -> Result<(), IoError> {
    let f = SphereFile {
        markers: model
            .markers
            .iter()
            .map(|(&id, c)| MarkerEntry {
                id,
                corners: c.map(|v| [v.x, v.y, v.z]),
            })
            .collect(),
        tip_offset: model.tip_offset,
    };
    write_json(path, &f)
}

pub fn write_ply_cloud(path: &Path, points: &[Vector3<f64>]) -> Result<(), IoError> {
    let colored: Vec<ColoredPoint> = points
        .iter()
        .map(|&p| ColoredPoint { p, rgb: [200, 200, 200] })
        .collect();
    write_atomic(path, ply_points(&colored).as_bytes())
}
