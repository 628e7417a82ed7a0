//! Pinhole camera/projector models, pixel Jacobians, triangulation and plane fitting.
//!
//! The world frame is the camera frame: the camera always has `R = I`, `t = 0`
//! and the projector extrinsics carry the full rig geometry. Pixel coordinates
//! are continuous image-plane coordinates; the centre of pixel index `i` sits at
//! `i + 0.5` (see [`crate::image::pixel_center`]).

use nalgebra::{Matrix3, Matrix3x4, SymmetricEigen, Vector3, Vector4};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub type WorldPoint = Vector3<f64>;

/// Smallest |s| accepted by [`project`].
pub const MIN_PROJECTIVE_SCALE: f64 = 1e-12;
/// Condition number above which [`triangulate`] reports near-parallel rays.
pub const MAX_TRIANGULATION_CONDITION: f64 = 1e12;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        let intr = Intrinsics { fx, fy, cx, cy, skew };
        intr.validate("intrinsics")?;
        Ok(intr)
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("fx", self.fx),
            ("fy", self.fy),
            ("cx", self.cx),
            ("cy", self.cy),
            ("skew", self.skew),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{prefix}.{name}"), "must be finite"));
            }
        }
        if self.fx <= 0.0 {
            return Err(Error::invalid(format!("{prefix}.fx"), "must be > 0"));
        }
        if self.fy <= 0.0 {
            return Err(Error::invalid(format!("{prefix}.fy"), "must be > 0"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Extrinsics {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let e = Extrinsics { rotation, translation };
        e.validate("extrinsics")?;
        Ok(e)
    }

    /// Pose of a device centred at `center` whose optical axis passes through `target`,
    /// with image rows running along +y of the world frame.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> Result<Self> {
        let z = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("target", "coincides with centre"))?;
        let x = Vector3::y()
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("target", "optical axis parallel to world y"))?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::new(rotation, -(rotation * center))
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        if self
            .rotation
            .iter()
            .chain(self.translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid(prefix, "non-finite entry"));
        }
        let gram = self.rotation.transpose() * self.rotation;
        if (gram - Matrix3::identity()).amax() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!("{prefix}.R"), "rotation is not orthonormal"));
        }
        if (self.rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!("{prefix}.R"), "rotation determinant must be +1"));
        }
        Ok(())
    }

    /// Optical centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// A 3×4 projection matrix `C = A·[R, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(pub Matrix3x4<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub s: f64,
}

/// 2×3 matrix of pixel partial derivatives with respect to world coordinates (px/mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelJacobian {
    pub du: Vector3<f64>,
    pub dv: Vector3<f64>,
}

impl PixelJacobian {
    /// Pixel motion `(du, dv)` caused by a world displacement.
    pub fn apply(&self, displacement: &Vector3<f64>) -> (f64, f64) {
        (self.du.dot(displacement), self.dv.dot(displacement))
    }
}

pub fn compose_projection(intr: &Intrinsics, extr: &Extrinsics) -> ProjectionMatrix {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&extr.rotation);
    rt.set_column(3, &extr.translation);
    ProjectionMatrix(intr.matrix() * rt)
}

impl ProjectionMatrix {
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// The left 3×3 block.
    pub fn linear_part(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn project(&self, p: &WorldPoint) -> Result<Projection> {
        project(self, p)
    }

    pub fn jacobian(&self, p: &WorldPoint) -> Result<PixelJacobian> {
        pixel_jacobian(self, p)
    }

    /// Optical centre: the right null vector of `C`.
    pub fn center(&self) -> Vector3<f64> {
        let m = self.linear_part();
        let c4 = self.0.column(3).into_owned();
        -(m.try_inverse().unwrap_or_else(Matrix3::zeros) * c4)
    }

    /// Unit-depth ray direction `(x/z, y/z, 1)` through image point `(u, v)` for a
    /// camera with identity extrinsics.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let m = self.linear_part();
        let d = m.try_inverse().unwrap_or_else(Matrix3::zeros) * Vector3::new(u, v, 1.0);
        d / d.z
    }
}

pub fn project(c: &ProjectionMatrix, p: &WorldPoint) -> Result<Projection> {
    let h = Vector4::new(p.x, p.y, p.z, 1.0);
    let q = c.0 * h;
    if q.z.abs() < MIN_PROJECTIVE_SCALE {
        return Err(Error::DegenerateProjection { scale: q.z });
    }
    Ok(Projection {
        u: q.x / q.z,
        v: q.y / q.z,
        s: q.z,
    })
}

/// Closed-form quotient-rule derivatives of `(u, v)` with respect to `(x, y, z)`.
///
/// For the u row, `∂u/∂x = [C11(C32 y + C33 z + C34) − C31(C12 y + C13 z + C14)] / s²`
/// with the analogous expressions for the other five entries.
pub fn pixel_jacobian(c: &ProjectionMatrix, p: &WorldPoint) -> Result<PixelJacobian> {
    let m = &c.0;
    let xyz1 = [p.x, p.y, p.z, 1.0];
    let s: f64 = (0..4).map(|k| m[(2, k)] * xyz1[k]).sum();
    if s.abs() < MIN_PROJECTIVE_SCALE {
        return Err(Error::DegenerateProjection { scale: s });
    }
    let s2 = s * s;
    let row = |r: usize| {
        let mut d = Vector3::zeros();
        for j in 0..3 {
            // Sums over every homogeneous coordinate except the one being differentiated.
            let rest_s: f64 = (0..4).filter(|&k| k != j).map(|k| m[(2, k)] * xyz1[k]).sum();
            let rest_n: f64 = (0..4).filter(|&k| k != j).map(|k| m[(r, k)] * xyz1[k]).sum();
            d[j] = (m[(r, j)] * rest_s - m[(2, j)] * rest_n) / s2;
        }
        d
    };
    Ok(PixelJacobian { du: row(0), dv: row(1) })
}

/// Intersects the camera ray through `cam_pixel` with the projector plane of column `u_p`.
pub fn triangulate(
    cam: &ProjectionMatrix,
    proj: &ProjectionMatrix,
    cam_pixel: (f64, f64),
    u_p: f64,
) -> Result<WorldPoint> {
    let (uc, vc) = cam_pixel;
    let c = &cam.0;
    let pm = &proj.0;
    let r0 = c.row(2) * uc - c.row(0);
    let r1 = c.row(2) * vc - c.row(1);
    let r2 = pm.row(2) * u_p - pm.row(0);
    let a = Matrix3::from_rows(&[
        r0.fixed_columns::<3>(0).into_owned(),
        r1.fixed_columns::<3>(0).into_owned(),
        r2.fixed_columns::<3>(0).into_owned(),
    ]);
    let b = -Vector3::new(r0[3], r1[3], r2[3]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_TRIANGULATION_CONDITION) {
        return Err(Error::SingularGeometry { condition });
    }
    svd.solve(&b, 0.0).map_err(|_| Error::SingularGeometry { condition })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    /// Unit normal, oriented so that `offset >= 0`.
    pub normal: Vector3<f64>,
    /// Signed distance of the plane from the origin along `normal` (mm).
    pub offset: f64,
    /// Right-handed orthonormal basis: columns are the in-plane direction of
    /// maximal spread, the second in-plane direction, and the normal.
    pub basis: Matrix3<f64>,
    pub centroid: Vector3<f64>,
}

impl PlaneFit {
    /// In-plane direction of maximal point spread.
    pub fn principal_direction(&self) -> Vector3<f64> {
        self.basis.column(0).into_owned()
    }

    pub fn distance(&self, p: &WorldPoint) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Total-least-squares plane through `points` via the covariance eigen-decomposition.
pub fn fit_plane(points: &[WorldPoint]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l_max, l_mid) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l_max > 0.0) || l_mid <= l_max * 1e-12 {
        return Err(Error::DegenerateInput("points are collinear or coincident".into()));
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[2]).normalize();
    if normal.dot(&centroid) < 0.0 {
        normal = -normal;
    }
    let mut major: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    // Re-orthogonalise against the normal to remove eigen-solver round-off.
    major = (major - normal * normal.dot(&major)).normalize();
    if major.x < -1e-12 || (major.x.abs() <= 1e-12 && major.y < 0.0) {
        major = -major;
    }
    let minor = normal.cross(&major);
    let basis = Matrix3::from_columns(&[major, minor, normal]);
    Ok(PlaneFit {
        normal,
        offset: normal.dot(&centroid),
        basis,
        centroid,
    })
}

/// Camera + projector calibration; the camera frame is the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationData {
    pub camera: Intrinsics,
    pub projector: Intrinsics,
    pub projector_pose: Extrinsics,
    pub camera_resolution: (usize, usize),
    pub projector_resolution: (usize, usize),
    camera_matrix: ProjectionMatrix,
    projector_matrix: ProjectionMatrix,
}

impl CalibrationData {
    pub fn new(
        camera: Intrinsics,
        camera_resolution: (usize, usize),
        projector: Intrinsics,
        projector_pose: Extrinsics,
        projector_resolution: (usize, usize),
    ) -> Result<Self> {
        camera.validate("camera")?;
        projector.validate("projector")?;
        projector_pose.validate("projector")?;
        for (name, (w, h)) in [
            ("camera.resolution", camera_resolution),
            ("projector.resolution", projector_resolution),
        ] {
            if w == 0 || h == 0 {
                return Err(Error::invalid(name, "width and height must be positive"));
            }
        }
        let camera_matrix = compose_projection(&camera, &Extrinsics::identity());
        let projector_matrix = compose_projection(&projector, &projector_pose);
        Ok(CalibrationData {
            camera,
            projector,
            projector_pose,
            camera_resolution,
            projector_resolution,
            camera_matrix,
            projector_matrix,
        })
    }

    #[inline]
    pub fn camera_matrix(&self) -> &ProjectionMatrix {
        &self.camera_matrix
    }

    #[inline]
    pub fn projector_matrix(&self) -> &ProjectionMatrix {
        &self.projector_matrix
    }

    pub fn projector_center(&self) -> Vector3<f64> {
        self.projector_pose.center()
    }

    /// Direction `(x/z, y/z, 1)` of the camera ray through image point `(u, v)`.
    pub fn camera_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let c = &self.camera;
        let y = (v - c.cy) / c.fy;
        let x = (u - c.cx - c.skew * y) / c.fx;
        Vector3::new(x, y, 1.0)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::parse("calibration", e.to_string()))?;
        Self::from_json(&doc)
    }

    pub fn from_json(doc: &Value) -> Result<Self> {
        let cam = field(doc, "", "camera")?;
        let proj = field(doc, "", "projector")?;
        let camera = parse_intrinsics(cam, "camera")?;
        let camera_resolution = parse_resolution(cam, "camera")?;
        let projector = parse_intrinsics(proj, "projector")?;
        let projector_resolution = parse_resolution(proj, "projector")?;
        let r = field(proj, "projector", "R")?;
        let rows = r
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| Error::parse("projector.R", "expected a 3x3 array"))?;
        let mut rotation = Matrix3::zeros();
        for (i, row) in rows.iter().enumerate() {
            let vals = number_array(row, &format!("projector.R[{i}]"), 3)?;
            for (j, v) in vals.into_iter().enumerate() {
                rotation[(i, j)] = v;
            }
        }
        let t = number_array(field(proj, "projector", "t")?, "projector.t", 3)?;
        let pose = Extrinsics {
            rotation,
            translation: Vector3::new(t[0], t[1], t[2]),
        };
        Self::new(camera, camera_resolution, projector, pose, projector_resolution)
    }

    pub fn to_json(&self) -> Value {
        let r = &self.projector_pose.rotation;
        let t = &self.projector_pose.translation;
        json!({
            "camera": {
                "fx": self.camera.fx, "fy": self.camera.fy,
                "cx": self.camera.cx, "cy": self.camera.cy, "skew": self.camera.skew,
                "resolution": [self.camera_resolution.0, self.camera_resolution.1],
            },
            "projector": {
                "fx": self.projector.fx, "fy": self.projector.fy,
                "cx": self.projector.cx, "cy": self.projector.cy, "skew": self.projector.skew,
                "R": [[r[(0,0)], r[(0,1)], r[(0,2)]], [r[(1,0)], r[(1,1)], r[(1,2)]], [r[(2,0)], r[(2,1)], r[(2,2)]]],
                "t": [t.x, t.y, t.z],
                "resolution": [self.projector_resolution.0, self.projector_resolution.1],
            }
        })
    }
}

fn field<'a>(obj: &'a Value, prefix: &str, name: &str) -> Result<&'a Value> {
    let path = if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    };
    obj.get(name).ok_or_else(|| Error::parse(path, "missing field"))
}

fn number(obj: &Value, prefix: &str, name: &str) -> Result<f64> {
    field(obj, prefix, name)?
        .as_f64()
        .ok_or_else(|| Error::parse(format!("{prefix}.{name}"), "expected a number"))
}

fn number_array(v: &Value, path: &str, len: usize) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == len)
        .ok_or_else(|| Error::parse(path, format!("expected an array of {len} numbers")))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| Error::parse(format!("{path}[{i}]"), "expected a number"))
        })
        .collect()
}

fn parse_intrinsics(obj: &Value, prefix: &str) -> Result<Intrinsics> {
    let skew = match obj.get("skew") {
        None | Some(Value::Null) => 0.0,
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::parse(format!("{prefix}.skew"), "expected a number"))?,
    };
    let intr = Intrinsics {
        fx: number(obj, prefix, "fx")?,
        fy: number(obj, prefix, "fy")?,
        cx: number(obj, prefix, "cx")?,
        cy: number(obj, prefix, "cy")?,
        skew,
    };
    intr.validate(prefix)?;
    Ok(intr)
}

fn parse_resolution(obj: &Value, prefix: &str) -> Result<(usize, usize)> {
    let path = format!("{prefix}.resolution");
    let arr = field(obj, prefix, "resolution")?
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::parse(path.clone(), "expected [width, height]"))?;
    let dim = |i: usize| {
        arr[i]
            .as_u64()
            .filter(|&d| d > 0)
            .map(|d| d as usize)
            .ok_or_else(|| Error::parse(format!("{path}[{i}]"), "expected a positive integer"))
    };
    Ok((dim(0)?, dim(1)?))
}
