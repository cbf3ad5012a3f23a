//! COLMAP text-format reconstruction I/O.
//!
//! Reads and writes the `cameras.txt` / `images.txt` pair of a sparse
//! reconstruction. Only the pose header line of each image entry is consumed;
//! the 2D-keypoint line that follows it is skipped unparsed. One camera per
//! sequence is assumed (single handheld camera).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{relative_pose, Intrinsics, Pose, Rotation};

/// Coarse world-to-camera poses of one sequence, keyed by frame name.
#[derive(Debug, Clone)]
pub struct SequencePoses {
    pub id: String,
    pub poses: BTreeMap<String, Pose>,
    pub intrinsics: Intrinsics,
    /// Names whose quaternion deviated from unit norm by more than 1e-3
    /// before normalization.
    pub quaternion_warnings: Vec<String>,
}

impl SequencePoses {
    pub fn pose(&self, frame: &str) -> Result<&Pose> {
        self.poses
            .get(frame)
            .ok_or_else(|| Error::FrameUnregistered(frame.to_string()))
    }

    pub fn is_registered(&self, frame: &str) -> bool {
        self.poses.contains_key(frame)
    }

    /// Relative coarse pose E_{target→source} = E_source ∘ E_target⁻¹.
    pub fn coarse_relative(&self, target: &str, source: &str) -> Result<Pose> {
        let e_t = self.pose(target)?;
        let e_s = self.pose(source)?;
        Ok(relative_pose(e_t, e_s))
    }

    /// Loads `cameras.txt` + `images.txt` from a sequence directory.
    pub fn load_dir(dir: &Path, id: &str) -> Result<SequencePoses> {
        let cam_path = dir.join("cameras.txt");
        let img_path = dir.join("images.txt");
        for p in [&cam_path, &img_path] {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "missing reconstruction file {}",
                    p.display()
                )));
            }
        }
        let intrinsics = parse_cameras(std::io::BufReader::new(std::fs::File::open(&cam_path)?))?;
        let (poses, warnings) =
            parse_images(std::io::BufReader::new(std::fs::File::open(&img_path)?))?;
        Ok(SequencePoses {
            id: id.to_string(),
            poses,
            intrinsics,
            quaternion_warnings: warnings,
        })
    }
}

fn split_ws(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

fn parse_field<T: std::str::FromStr>(tok: &str, line_no: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        file: "cameras.txt/images.txt".into(),
        line: line_no,
        msg: format!("cannot parse {what} from `{tok}`"),
    })
}

/// Parses COLMAP `cameras.txt`; returns the intrinsics of the single camera.
/// Supported models: PINHOLE (fx fy cx cy), SIMPLE_PINHOLE (f cx cy).
pub fn parse_cameras<R: BufRead>(reader: R) -> Result<Intrinsics> {
    let mut found: Option<Intrinsics> = None;
    let mut camera_count = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tok = split_ws(trimmed);
        if tok.len() < 4 {
            return Err(Error::Parse {
                file: "cameras.txt".into(),
                line: line_no,
                msg: format!("expected at least 4 fields, got {}", tok.len()),
            });
        }
        let model = tok[1];
        let width: usize = parse_field(tok[2], line_no, "width")?;
        let height: usize = parse_field(tok[3], line_no, "height")?;
        let params: Vec<f64> = tok[4..]
            .iter()
            .map(|t| parse_field(t, line_no, "camera parameter"))
            .collect::<Result<_>>()?;
        let intr = match model {
            "PINHOLE" => {
                if params.len() != 4 {
                    return Err(Error::Parse {
                        file: "cameras.txt".into(),
                        line: line_no,
                        msg: format!("PINHOLE expects 4 parameters, got {}", params.len()),
                    });
                }
                Intrinsics::new(params[0], params[1], params[2], params[3], width, height)?
            }
            "SIMPLE_PINHOLE" => {
                if params.len() != 3 {
                    return Err(Error::Parse {
                        file: "cameras.txt".into(),
                        line: line_no,
                        msg: format!("SIMPLE_PINHOLE expects 3 parameters, got {}", params.len()),
                    });
                }
                Intrinsics::new(params[0], params[0], params[1], params[2], width, height)?
            }
            other => return Err(Error::UnsupportedCameraModel(other.to_string())),
        };
        camera_count += 1;
        if camera_count > 1 {
            return Err(Error::MultipleCameras(camera_count));
        }
        found = Some(intr);
    }
    found.ok_or_else(|| Error::Parse {
        file: "cameras.txt".into(),
        line: 0,
        msg: "no camera entry found".into(),
    })
}

/// Parses COLMAP `images.txt`. Each image entry is two lines:
/// `IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME` followed by a 2D-points
/// line that is skipped. Quaternions are normalized on load; deviations
/// beyond 1e-3 are recorded as warnings.
pub fn parse_images<R: BufRead>(reader: R) -> Result<(BTreeMap<String, Pose>, Vec<String>)> {
    let mut poses = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut expect_points_line = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if expect_points_line {
            // keypoint line (possibly empty) — skipped unparsed
            expect_points_line = false;
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let tok = split_ws(trimmed);
        if tok.len() < 10 {
            return Err(Error::Parse {
                file: "images.txt".into(),
                line: line_no,
                msg: format!("expected 10 fields in image header, got {}", tok.len()),
            });
        }
        let qw: f64 = parse_field(tok[1], line_no, "qw")?;
        let qx: f64 = parse_field(tok[2], line_no, "qx")?;
        let qy: f64 = parse_field(tok[3], line_no, "qy")?;
        let qz: f64 = parse_field(tok[4], line_no, "qz")?;
        let tx: f64 = parse_field(tok[5], line_no, "tx")?;
        let ty: f64 = parse_field(tok[6], line_no, "ty")?;
        let tz: f64 = parse_field(tok[7], line_no, "tz")?;
        let name = tok[9].to_string();
        let norm = (qw * qw + qx * qx + qy * qy + qz * qz).sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            warnings.push(name.clone());
        }
        let pose = Pose::new(
            Rotation::from_quaternion(qw, qx, qy, qz),
            Vector3::new(tx, ty, tz),
        );
        if poses.insert(name.clone(), pose).is_some() {
            return Err(Error::DuplicateImage(name));
        }
        expect_points_line = true;
    }
    Ok((poses, warnings))
}

/// Writes `cameras.txt` in PINHOLE form.
pub fn write_cameras<W: Write>(writer: &mut W, k: &Intrinsics) -> Result<()> {
    writeln!(writer, "# Camera list with one line of data per camera:")?;
    writeln!(writer, "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]")?;
    writeln!(
        writer,
        "1 PINHOLE {} {} {} {} {} {}",
        k.width, k.height, k.fx, k.fy, k.cx, k.cy
    )?;
    Ok(())
}

/// Writes `images.txt`; frames emitted in the given order, keypoint lines
/// left empty.
pub fn write_images<W: Write>(writer: &mut W, frames: &[(String, Pose)]) -> Result<()> {
    writeln!(writer, "# Image list with two lines of data per image:")?;
    writeln!(
        writer,
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME"
    )?;
    writeln!(writer, "#   POINTS2D[] as (X, Y, POINT3D_ID)")?;
    for (i, (name, pose)) in frames.iter().enumerate() {
        let (w, x, y, z) = pose.rotation.quaternion();
        let t = pose.translation;
        writeln!(
            writer,
            "{} {:.17} {:.17} {:.17} {:.17} {:.17} {:.17} {:.17} 1 {}",
            i + 1,
            w,
            x,
            y,
            z,
            t.x,
            t.y,
            t.z,
            name
        )?;
        writeln!(writer)?;
    }
    Ok(())
}

/// Writes the `cameras.txt`/`images.txt` pair into a directory.
pub fn write_reconstruction(dir: &Path, k: &Intrinsics, frames: &[(String, Pose)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut cams = std::io::BufWriter::new(std::fs::File::create(dir.join("cameras.txt"))?);
    write_cameras(&mut cams, k)?;
    let mut imgs = std::io::BufWriter::new(std::fs::File::create(dir.join("images.txt"))?);
    write_images(&mut imgs, frames)?;
    Ok(())
}
