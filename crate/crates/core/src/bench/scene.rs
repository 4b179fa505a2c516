//! A small synthetic room with known contents: a cabinet with two drawer
//! handles and a table, observed by RGB-D frames with rendered depth and
//! element masks, plus two demonstrations (a drawer pull and a lid lift).

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{default_intrinsics, CameraPath, MotionProfile, ScenarioConfig};
use crate::geometry::{look_at, CameraIntrinsics, Pose};
use crate::graph::{ArticulationAxis, JointType};
use crate::lifting::BinaryMask;
use crate::views::{DepthRaster, FrameRecord};

pub const FEATURE_DIM: usize = 8;
const SPACING: f64 = 0.01;
const OUTLIERS: usize = 6;
const EMBEDDING_NOISE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub instance_id: u64,
    pub label: String,
    /// Instance cloud including a few far outliers.
    pub points: Vec<Vector3<f64>>,
    /// Cloud without outliers.
    pub clean_points: Vec<Vector3<f64>>,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneElement {
    /// Instance id of the parent object.
    pub object_id: u64,
    pub label: String,
    pub points: Vec<Vector3<f64>>,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMask {
    pub frame_id: u64,
    pub object_id: u64,
    pub label: String,
    pub mask: BinaryMask,
    pub score: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEmbedding {
    pub object_id: u64,
    pub frame_id: u64,
    pub embedding: Vec<f64>,
}

/// A demonstration and the element it should end up on.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDemo {
    pub demo_id: String,
    pub scenario: ScenarioConfig,
    /// Index into [`SyntheticScene::elements`] the demo starts on, or `None`
    /// when it should create a new interaction element.
    pub expected_element: Option<usize>,
    /// Instance id of the object a new element should hang under.
    pub expected_parent: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub objects: Vec<SceneObject>,
    pub elements: Vec<SceneElement>,
    pub frames: Vec<FrameRecord>,
    pub object_embeddings: Vec<ObjectEmbedding>,
    pub masks: Vec<SceneMask>,
    pub demos: Vec<SceneDemo>,
}

fn grid(
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    nu: usize,
    nv: usize,
) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            out.push(origin + u * (i as f64 * SPACING) + v * (j as f64 * SPACING));
        }
    }
    out
}

fn basis(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; FEATURE_DIM];
    v[i] = 1.0;
    v
}

fn noisy(rng: &mut ChaCha8Rng, base: &[f64]) -> Vec<f64> {
    let n = Normal::new(0.0, EMBEDDING_NOISE).expect("finite");
    base.iter().map(|b| b + n.sample(rng)).collect()
}

fn scene_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 280.0,
        fy: 280.0,
        cx: 160.0,
        cy: 120.0,
        width: 320,
        height: 240,
    }
}

/// Z-buffer render: depth raster plus, per pixel, the index of the element
/// whose point won (or `usize::MAX`).
fn render(
    cam: &Pose,
    k: &CameraIntrinsics,
    surfaces: &[(&[Vector3<f64>], usize)],
) -> (DepthRaster, Vec<usize>) {
    let (w, h) = (k.width as i64, k.height as i64);
    let mut depth = DepthRaster::filled(k.width, k.height, 0.0);
    let mut owner = vec![usize::MAX; (w * h) as usize];
    let inv = cam.inverse();
    for (points, tag) in surfaces {
        for p in points.iter() {
            let pc = inv.transform_point(p);
            let Ok(px) = k.project_cam(&pc) else { continue };
            let (c0, r0) = (px.x.round() as i64, px.y.round() as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (c, r) = (c0 + dc, r0 + dr);
                    if c < 0 || r < 0 || c >= w || r >= h {
                        continue;
                    }
                    let cur = depth.raw(c as u32, r as u32);
                    if cur <= 0.0 || (pc.z as f32) < cur {
                        depth.set(c as u32, r as u32, pc.z as f32);
                        owner[(r * w + c) as usize] = *tag;
                    }
                }
            }
        }
    }
    (depth, owner)
}

/// Minimum mask size, in pixels, for a detection to be reported.
const MIN_MASK_PIXELS: usize = 10;

pub fn cabinet_scene(seed: u64) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ex, ey, ez) = (Vector3::x(), Vector3::y(), Vector3::z());

    // cabinet: front face at x = 0 facing -x, top at z = 0.8
    let mut cabinet = grid(Vector3::new(0.0, -0.4, 0.0), ey, ez, 81, 81);
    cabinet.extend(grid(Vector3::new(0.01, -0.4, 0.8), ex, ey, 50, 81));
    let handles: Vec<Vec<Vector3<f64>>> = [0.6, 0.3]
        .iter()
        .map(|&z| grid(Vector3::new(-0.03, -0.06, z - 0.01), ey, ez, 13, 3))
        .collect();
    for h in &handles {
        cabinet.extend(h.iter().copied());
    }
    let table = grid(Vector3::new(-0.4, 0.8, 0.7), ex, ey, 81, 81);

    let with_outliers = |rng: &mut ChaCha8Rng, pts: &[Vector3<f64>]| {
        let n = Normal::new(0.0, 0.6).expect("finite");
        let mut out = pts.to_vec();
        let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
        for _ in 0..OUTLIERS {
            let off = Vector3::from_fn(|_, _| n.sample(rng));
            out.push(c + off.normalize() * (0.5 + off.norm()));
        }
        out
    };
    let objects = vec![
        SceneObject {
            instance_id: 10,
            label: "cabinet".into(),
            points: with_outliers(&mut rng, &cabinet),
            clean_points: cabinet.clone(),
            feature: basis(0),
        },
        SceneObject {
            instance_id: 20,
            label: "table".into(),
            points: with_outliers(&mut rng, &table),
            clean_points: table.clone(),
            feature: basis(1),
        },
    ];
    let elements: Vec<SceneElement> = handles
        .iter()
        .map(|h| SceneElement {
            object_id: 10,
            label: "handle".into(),
            points: h.clone(),
            feature: basis(2),
        })
        .collect();

    let k = scene_intrinsics();
    let target = Vector3::new(0.0, 0.5, 0.5);
    let mut frames = Vec::new();
    let mut masks = Vec::new();
    let mut object_embeddings = Vec::new();
    let non_handle = |pts: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        pts.iter()
            .filter(|p| p.x > -0.005)
            .copied()
            .collect()
    };
    let cabinet_body = non_handle(&cabinet);
    for i in 0..8u64 {
        let y = -0.6 + 0.3 * i as f64;
        let eye = Vector3::new(-2.0 + 0.05 * i as f64, y, 1.3);
        let cam = look_at(eye, target, ez);
        let mut surfaces: Vec<(&[Vector3<f64>], usize)> =
            vec![(&cabinet_body, usize::MAX), (&table, usize::MAX)];
        for (j, h) in handles.iter().enumerate() {
            surfaces.push((h, j));
        }
        let (depth, owner) = render(&cam, &k, &surfaces);
        for (j, el) in elements.iter().enumerate() {
            let data: Vec<bool> = owner.iter().map(|&o| o == j).collect();
            if data.iter().filter(|&&b| b).count() < MIN_MASK_PIXELS {
                continue;
            }
            masks.push(SceneMask {
                frame_id: i,
                object_id: el.object_id,
                label: el.label.clone(),
                mask: BinaryMask::new(k.width, k.height, data).expect("non-empty"),
                score: 0.9,
                embedding: noisy(&mut rng, &el.feature),
            });
        }
        for o in &objects {
            object_embeddings.push(ObjectEmbedding {
                object_id: o.instance_id,
                frame_id: i,
                embedding: noisy(&mut rng, &o.feature),
            });
        }
        frames.push(FrameRecord::new(i, i as f64 * 0.5, k, cam, Some(depth)).expect("sized"));
    }

    let centroid = |p: &[Vector3<f64>]| p.iter().sum::<Vector3<f64>>() / p.len() as f64;
    let drawer_start = centroid(&handles[0]);
    let lid_start = Vector3::new(-0.2, 1.2, 0.75);
    let lid_center = Vector3::new(0.1, 1.2, 0.75);
    let tip_orientation = UnitQuaternion::from_euler_angles(0.3, -0.2, 0.5);
    let scenario = |axis: ArticulationAxis, start: Vector3<f64>, eye: Vector3<f64>, s: u64| {
        ScenarioConfig {
            axis,
            tip_start: Pose::new(start, tip_orientation),
            duration: 2.5,
            profile: MotionProfile::Ease,
            camera: CameraPath::Static {
                eye,
                target: start + Vector3::new(-0.1, 0.0, 0.0),
            },
            intrinsics: default_intrinsics(),
            pixel_noise_sigma: 0.5,
            dropout_rate: 0.1,
            frame_rate: 30.0,
            seed: seed.wrapping_add(s),
        }
    };
    let demos = vec![
        SceneDemo {
            demo_id: "drawer".into(),
            scenario: scenario(
                ArticulationAxis {
                    joint_type: JointType::Prismatic,
                    center: drawer_start - ex * 0.15,
                    direction: -ex,
                    range: 0.3,
                },
                drawer_start,
                Vector3::new(-1.1, -0.5, 1.2),
                1,
            ),
            expected_element: Some(0),
            expected_parent: 10,
        },
        SceneDemo {
            demo_id: "lid".into(),
            scenario: scenario(
                ArticulationAxis {
                    joint_type: JointType::Revolute,
                    center: lid_center,
                    direction: ey,
                    range: 80f64.to_radians(),
                },
                lid_start,
                Vector3::new(-1.2, 0.7, 1.4),
                2,
            ),
            expected_element: None,
            expected_parent: 20,
        },
    ];
    SyntheticScene {
        objects,
        elements,
        frames,
        object_embeddings,
        masks,
        demos,
    }
}

/// Pixel of `p` in `frame`, if it projects inside the image.
pub fn pixel_of(p: &Vector3<f64>, frame: &FrameRecord) -> Option<Vector2<f64>> {
    crate::geometry::project(p, &frame.cam_pose, &frame.intrinsics)
        .ok()
        .map(|(px, _)| px)
        .filter(|px| frame.intrinsics.contains(px))
}
