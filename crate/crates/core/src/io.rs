//! On-disk formats: scene, tasks, likelihood, calibration samples, the
//! observation log (JSON Lines), ground truth, output map, and metrics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::eval::{GroundTruthGeometry, GroundTruthObject};
use crate::types::{CameraFrame, DepthMap, Mat3, MaskObservation, ObjectCluster, ObservationFrame, OrientedBox, Rle, Vec3};

fn schema_error(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        source_name: source.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| schema_error(source, e.line(), e.to_string()))
}

/// Reads and parses a JSON document, reporting schema errors with the line.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&text, &path.display().to_string())
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGaussian {
    pub id: u64,
    pub center: [f64; 3],
    /// Pass-through attributes (opacity, scale, colour, ...).
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub gaussians: Vec<SceneGaussian>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl SceneFile {
    pub fn from_centers(centers: impl IntoIterator<Item = (u64, Vec3)>) -> Self {
        Self {
            gaussians: centers
                .into_iter()
                .map(|(id, c)| SceneGaussian {
                    id,
                    center: [c.x, c.y, c.z],
                    extra: Map::new(),
                })
                .collect(),
            extra: Map::new(),
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = (u64, Vec3)> + '_ {
        self.gaussians.iter().map(|g| (g.id, Vec3::from(g.center)))
    }
}

/// Score samples for fitting the class-conditional Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSamples {
    pub negative_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    /// Row-major camera-from-world rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl From<&CameraFrame> for CameraRecord {
    fn from(c: &CameraFrame) -> Self {
        let r = &c.rotation;
        Self {
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            translation: [c.translation.x, c.translation.y, c.translation.z],
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

impl From<&CameraRecord> for CameraFrame {
    fn from(r: &CameraRecord) -> Self {
        Self {
            rotation: Mat3::from_row_slice(&r.rotation),
            translation: Vec3::from(r.translation),
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            width: r.width,
            height: r.height,
        }
    }
}

/// Little-endian f32 depth, inline as base64 or in a sidecar file relative to
/// the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthRecord {
    pub encoding: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

pub const DEPTH_ENCODING: &str = "f32le";

pub fn encode_depth(depths: &[f32]) -> Vec<u8> {
    depths.iter().flat_map(|d| d.to_le_bytes()).collect()
}

pub fn decode_depth(bytes: &[u8]) -> std::result::Result<Vec<f32>, String> {
    if !bytes.len().is_multiple_of(4) {
        return Err(format!("depth payload of {} bytes is not a multiple of 4", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub mask_id: u64,
    /// `[start, len]` runs over row-major pixel indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rle: Option<Vec<[u32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian_ids: Option<Vec<u64>>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub camera: CameraRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthRecord>,
    pub masks: Vec<MaskRecord>,
}

impl FrameRecord {
    /// Record with depth stored inline.
    pub fn from_frame(frame: &ObservationFrame) -> Self {
        Self {
            frame_id: frame.frame_id,
            camera: CameraRecord::from(&frame.camera),
            depth: frame.depth.as_ref().map(|d| DepthRecord {
                encoding: DEPTH_ENCODING.to_string(),
                data: Some(BASE64.encode(encode_depth(&d.depths))),
                path: None,
            }),
            masks: frame
                .masks
                .iter()
                .map(|m| MaskRecord {
                    mask_id: m.mask_id,
                    rle: m
                        .region
                        .as_ref()
                        .map(|r| r.runs().iter().map(|&(s, l)| [s, l]).collect()),
                    gaussian_ids: m.gaussian_ids.clone(),
                    scores: m.scores.clone(),
                })
                .collect(),
        }
    }

    /// Converts to an in-memory frame; sidecar depth paths resolve against
    /// `base_dir`.
    pub fn into_frame(self, base_dir: Option<&Path>) -> std::result::Result<ObservationFrame, String> {
        let camera = CameraFrame::from(&self.camera);
        let pixel_count = camera.pixel_count();
        let depth = match self.depth {
            None => None,
            Some(rec) => {
                if rec.encoding != DEPTH_ENCODING {
                    return Err(format!("depth.encoding must be {DEPTH_ENCODING:?}, got {:?}", rec.encoding));
                }
                let bytes = match (rec.data, rec.path) {
                    (Some(data), None) => BASE64.decode(data).map_err(|e| format!("depth.data: {e}"))?,
                    (None, Some(path)) => {
                        let full = base_dir.map_or_else(|| PathBuf::from(&path), |b| b.join(&path));
                        std::fs::read(&full).map_err(|e| format!("depth.path {}: {e}", full.display()))?
                    }
                    _ => return Err("depth needs exactly one of `data` or `path`".into()),
                };
                let depths = decode_depth(&bytes)?;
                if depths.len() != pixel_count {
                    return Err(format!(
                        "depth has {} values, camera expects {pixel_count}",
                        depths.len()
                    ));
                }
                Some(DepthMap {
                    width: camera.width,
                    height: camera.height,
                    depths,
                })
            }
        };
        let mut masks = Vec::with_capacity(self.masks.len());
        for m in self.masks {
            if m.rle.is_none() && m.gaussian_ids.is_none() {
                return Err(format!("mask {}: needs `rle` or `gaussian_ids`", m.mask_id));
            }
            let region = match m.rle {
                Some(runs) => Some(
                    Rle::from_runs(runs.into_iter().map(|[s, l]| (s, l)).collect(), pixel_count)
                        .map_err(|e| format!("mask {}: rle {e}", m.mask_id))?,
                ),
                None => None,
            };
            masks.push(MaskObservation {
                mask_id: m.mask_id,
                region,
                scores: m.scores,
                gaussian_ids: m.gaussian_ids,
            });
        }
        Ok(ObservationFrame {
            frame_id: self.frame_id,
            camera,
            depth,
            masks,
        })
    }
}

/// Streaming reader over an observation log, one frame per line. Blank lines
/// are skipped; frame ids must strictly increase.
pub struct ObservationReader<R> {
    lines: std::io::Lines<R>,
    source: String,
    base_dir: Option<PathBuf>,
    line_no: usize,
    last_frame: Option<u64>,
}

impl ObservationReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut reader = Self::new(BufReader::new(file), path.display().to_string());
        reader.base_dir = path.parent().map(Path::to_path_buf);
        Ok(reader)
    }
}

impl<R: BufRead> ObservationReader<R> {
    pub fn new(reader: R, source: impl Into<String>) -> Self {
        Self {
            lines: reader.lines(),
            source: source.into(),
            base_dir: None,
            line_no: 0,
            last_frame: None,
        }
    }
}

impl<R: BufRead> Iterator for ObservationReader<R> {
    type Item = Result<ObservationFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: FrameRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => return Some(Err(schema_error(&self.source, self.line_no, e.to_string()))),
            };
            let frame = match record.into_frame(self.base_dir.as_deref()) {
                Ok(f) => f,
                Err(msg) => return Some(Err(schema_error(&self.source, self.line_no, msg))),
            };
            if let Some(previous) = self.last_frame {
                if frame.frame_id <= previous {
                    return Some(Err(schema_error(
                        &self.source,
                        self.line_no,
                        format!("frame_id {} is not greater than previous {previous}", frame.frame_id),
                    )));
                }
            }
            self.last_frame = Some(frame.frame_id);
            return Some(Ok(frame));
        }
    }
}

/// Appends one frame as a compact JSON line with inline depth.
pub fn write_frame<W: Write>(out: &mut W, frame: &ObservationFrame) -> Result<()> {
    serde_json::to_writer(&mut *out, &FrameRecord::from_frame(frame))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_observation_log(path: &Path, frames: &[ObservationFrame]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for frame in frames {
        write_frame(&mut out, frame)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub task_index: usize,
    pub points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl GroundTruthRecord {
    pub fn into_object(self) -> Result<GroundTruthObject> {
        if self.points.is_empty() {
            return Err(Error::EmptyInput("ground-truth points"));
        }
        Ok(GroundTruthObject {
            task_index: self.task_index,
            geometry: GroundTruthGeometry::Points(self.points.into_iter().map(Vec3::from).collect()),
            label: self.label,
        })
    }

    pub fn from_object(gt: &GroundTruthObject) -> Option<Self> {
        match &gt.geometry {
            GroundTruthGeometry::Points(points) => Some(Self {
                task_index: gt.task_index,
                points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
                label: gt.label.clone(),
            }),
            GroundTruthGeometry::Box(_) => None,
        }
    }
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthObject>> {
    let records: Vec<GroundTruthRecord> = read_json(path)?;
    records.into_iter().map(GroundTruthRecord::into_object).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub center: [f64; 3],
    /// Row-major; columns are the box axes.
    pub rotation: [f64; 9],
    pub half_extents: [f64; 3],
}

impl From<&OrientedBox> for BoxRecord {
    fn from(b: &OrientedBox) -> Self {
        let r = &b.rotation;
        Self {
            center: [b.center.x, b.center.y, b.center.z],
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            half_extents: [b.half_extents.x, b.half_extents.y, b.half_extents.z],
        }
    }
}

impl From<&BoxRecord> for OrientedBox {
    fn from(r: &BoxRecord) -> Self {
        Self {
            center: Vec3::from(r.center),
            rotation: Mat3::from_row_slice(&r.rotation),
            half_extents: Vec3::from(r.half_extents),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapObjectRecord {
    pub id: u64,
    pub gaussian_ids: Vec<u64>,
    /// T task probabilities, null task last.
    pub task_dist: Vec<f64>,
    pub obb: BoxRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub objects: Vec<MapObjectRecord>,
}

impl OutputMap {
    pub fn from_objects(objects: &[ObjectCluster]) -> Result<Self> {
        let objects = objects
            .iter()
            .map(|o| {
                let obb = o.obb.as_ref().ok_or_else(|| {
                    Error::InvalidParameter(format!("object {} has no bounding box", o.id))
                })?;
                Ok(MapObjectRecord {
                    id: o.id,
                    gaussian_ids: o.gaussian_ids.clone(),
                    task_dist: o.task_dist.clone(),
                    obb: BoxRecord::from(obb),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { objects })
    }

    /// Clusters rebuilt from the file. Primitive membership is not stored and
    /// comes back empty.
    pub fn to_objects(&self) -> Vec<ObjectCluster> {
        self.objects
            .iter()
            .map(|o| ObjectCluster {
                id: o.id,
                primitive_ids: Vec::new(),
                gaussian_ids: o.gaussian_ids.clone(),
                task_dist: o.task_dist.clone(),
                prior_mass: 0.0,
                obb: Some(OrientedBox::from(&o.obb)),
            })
            .collect()
    }

    pub fn task_count(&self) -> Option<usize> {
        self.objects.first().map(|o| o.task_dist.len().saturating_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_keeps_unknown_keys() {
        let text = r#"{"gaussians":[{"id":3,"center":[1,2,3],"opacity":0.5}],"name":"desk"}"#;
        let scene: SceneFile = parse_json(text, "scene").unwrap();
        assert_eq!(scene.gaussians[0].extra["opacity"], 0.5);
        assert_eq!(scene.extra["name"], "desk");
        let back = serde_json::to_string(&scene).unwrap();
        let again: SceneFile = parse_json(&back, "scene").unwrap();
        assert_eq!(scene, again);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let log = "{\"frame_id\":0,\"camera\":{\"rotation\":[1,0,0,0,1,0,0,0,1],\"translation\":[0,0,0],\"fx\":1,\"fy\":1,\"cx\":0,\"cy\":0,\"width\":2,\"height\":2},\"masks\":[]}\n\n{\"frame_id\":1,\"camera\":{}}\n";
        let mut reader = ObservationReader::new(log.as_bytes(), "log");
        assert!(reader.next().unwrap().is_ok());
        match reader.next().unwrap() {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frames_must_increase() {
        let frame = "{\"frame_id\":5,\"camera\":{\"rotation\":[1,0,0,0,1,0,0,0,1],\"translation\":[0,0,0],\"fx\":1,\"fy\":1,\"cx\":0,\"cy\":0,\"width\":2,\"height\":2},\"masks\":[]}\n";
        let log = format!("{frame}{frame}");
        let results: Vec<_> = ObservationReader::new(log.as_bytes(), "log").collect();
        assert!(results[0].is_ok());
        assert!(matches!(results[1], Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn depth_payload_must_match_camera() {
        let record = FrameRecord {
            frame_id: 0,
            camera: CameraRecord {
                rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                translation: [0.0; 3],
                fx: 1.0,
                fy: 1.0,
                cx: 0.5,
                cy: 0.5,
                width: 2,
                height: 2,
            },
            depth: Some(DepthRecord {
                encoding: DEPTH_ENCODING.into(),
                data: Some(BASE64.encode(encode_depth(&[1.0, 2.0]))),
                path: None,
            }),
            masks: vec![],
        };
        assert!(record.into_frame(None).unwrap_err().contains("expects 4"));
    }
}
