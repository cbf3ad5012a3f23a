//! Dataset and depth-map serialization: PNG8 color images, PNG16 depth in
//! millimeters, float32 PFM disparity/depth, and the on-disk sequence layout
//! that pairs rendered frames with reconstruction-style pose files.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::colmap::{self, SequencePoses};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::image::{Grid, ImageBuffer};
use crate::synth::SceneDataset;

/// Millimeter quantization for 16-bit depth PNGs.
const DEPTH_SCALE_MM: f64 = 1000.0;

pub fn write_png8(path: &Path, img: &ImageBuffer) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    match img.channels {
        3 => {
            let mut buf = Vec::with_capacity(img.data.len());
            for &v in &img.data {
                buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            image::save_buffer(path, &buf, w, h, image::ColorType::Rgb8)?;
        }
        1 => {
            let mut buf = Vec::with_capacity(img.data.len());
            for &v in &img.data {
                buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            image::save_buffer(path, &buf, w, h, image::ColorType::L8)?;
        }
        c => {
            return Err(Error::Config(format!(
                "cannot export {c}-channel image as PNG"
            )))
        }
    }
    Ok(())
}

pub fn read_png8(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ImageBuffer::zeros(w, h, 3);
    for (i, &byte) in img.as_raw().iter().enumerate() {
        out.data[i] = byte as f64 / 255.0;
    }
    Ok(out)
}

/// Depth in meters, stored as 16-bit millimeters (0 = missing/out of range).
pub fn write_depth_png16(path: &Path, depth: &Grid) -> Result<()> {
    let (w, h) = (depth.width as u32, depth.height as u32);
    let mut buf: Vec<u16> = Vec::with_capacity(depth.data.len());
    for &d in &depth.data {
        let mm = d * DEPTH_SCALE_MM;
        buf.push(if mm.is_finite() && mm >= 1.0 && mm <= u16::MAX as f64 {
            mm.round() as u16
        } else {
            0
        });
    }
    let mut bytes = Vec::with_capacity(buf.len() * 2);
    for v in buf {
        bytes.extend_from_slice(&v.to_ne_bytes());
    }
    image::save_buffer(path, &bytes, w, h, image::ColorType::L16)?;
    Ok(())
}

pub fn read_depth_png16(path: &Path) -> Result<Grid> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Grid::zeros(w, h);
    for (i, &v) in img.as_raw().iter().enumerate() {
        out.data[i] = v as f64 / DEPTH_SCALE_MM;
    }
    Ok(out)
}

/// Grayscale PFM, float32 little-endian (negative scale), rows bottom-to-top.
pub fn write_pfm(path: &Path, grid: &Grid) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    write!(f, "Pf\n{} {}\n-1.0\n", grid.width, grid.height)?;
    for y in (0..grid.height).rev() {
        for x in 0..grid.width {
            f.write_all(&(grid.at(y, x) as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Grid> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let parse_err = |msg: &str| Error::Parse {
        file: path.display().to_string(),
        line: 0,
        msg: msg.to_string(),
    };
    // header: three whitespace-terminated tokens, then raw samples
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    for _ in 0..4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| parse_err("non-ascii header"))?
                .to_string(),
        );
        pos += 1; // single whitespace after each token
    }
    if tokens[0] != "Pf" {
        return Err(parse_err("expected grayscale PFM magic 'Pf'"));
    }
    let w: usize = tokens[1].parse().map_err(|_| parse_err("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| parse_err("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| parse_err("bad scale"))?;
    if scale >= 0.0 {
        return Err(parse_err("big-endian PFM not supported"));
    }
    if bytes.len() - pos < w * h * 4 {
        return Err(parse_err("truncated sample data"));
    }
    let mut out = Grid::zeros(w, h);
    for y in (0..h).rev() {
        for x in 0..w {
            let b: [u8; 4] = bytes[pos..pos + 4].try_into().unwrap();
            out.set(y, x, f32::from_le_bytes(b) as f64);
            pos += 4;
        }
    }
    Ok(out)
}

/// Depth file name paired with a color frame name
/// (`frame_000.png` -> `depth_000.png`).
pub fn depth_name(frame_name: &str) -> String {
    let stem = frame_name.strip_suffix(".png").unwrap_or(frame_name);
    format!("depth_{}.png", stem.strip_prefix("frame_").unwrap_or(stem))
}

/// Writes one sequence directory: color PNGs, millimeter depth PNGs, and
/// pose files. `training_poses`, when given (corrupted input), becomes
/// `cameras.txt`/`images.txt` while ground truth moves to `gt_*.txt`;
/// otherwise ground truth serves directly as the training poses.
pub fn save_sequence(dir: &Path, scene: &SceneDataset, training_poses: Option<&[Pose]>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let gt: Vec<(String, Pose)> = scene
        .frames
        .iter()
        .map(|f| (f.name.clone(), f.pose))
        .collect();
    for f in &scene.frames {
        write_png8(&dir.join(&f.name), &f.image)?;
        write_depth_png16(&dir.join(depth_name(&f.name)), &f.depth)?;
    }
    match training_poses {
        Some(poses) => {
            if poses.len() != scene.frames.len() {
                return Err(Error::Config(format!(
                    "{} training poses for {} frames",
                    poses.len(),
                    scene.frames.len()
                )));
            }
            let train: Vec<(String, Pose)> = scene
                .frames
                .iter()
                .zip(poses)
                .map(|(f, p)| (f.name.clone(), *p))
                .collect();
            colmap::write_reconstruction(dir, &scene.intrinsics, &train)?;
            let mut cams = BufWriter::new(fs::File::create(dir.join("gt_cameras.txt"))?);
            colmap::write_cameras(&mut cams, &scene.intrinsics)?;
            let mut imgs = BufWriter::new(fs::File::create(dir.join("gt_images.txt"))?);
            colmap::write_images(&mut imgs, &gt)?;
        }
        None => colmap::write_reconstruction(dir, &scene.intrinsics, &gt)?,
    }
    Ok(())
}

/// One sequence loaded back from disk, frames ordered by file name.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub id: String,
    pub frame_names: Vec<String>,
    pub images: Vec<ImageBuffer>,
    /// Ground-truth depth per frame, when depth PNGs are present.
    pub gt_depth: Vec<Grid>,
    /// Training poses (cameras.txt / images.txt).
    pub poses: SequencePoses,
    /// Ground-truth poses when the directory carries a gt_* pair.
    pub gt_poses: Option<SequencePoses>,
}

pub fn load_sequence(dir: &Path, id: &str) -> Result<LoadedSequence> {
    let poses = SequencePoses::load_dir(dir, id)?;
    let mut frame_names: Vec<String> = poses.poses.keys().cloned().collect();
    frame_names.sort();
    let mut images = Vec::with_capacity(frame_names.len());
    let mut gt_depth = Vec::new();
    for name in &frame_names {
        let img_path = dir.join(name);
        if !img_path.exists() {
            return Err(Error::Config(format!(
                "pose file references missing image {}",
                img_path.display()
            )));
        }
        images.push(read_png8(&img_path)?);
        let dpath = dir.join(depth_name(name));
        if dpath.exists() {
            gt_depth.push(read_depth_png16(&dpath)?);
        }
    }
    if !gt_depth.is_empty() && gt_depth.len() != frame_names.len() {
        return Err(Error::Config(format!(
            "{} depth maps for {} frames in {}",
            gt_depth.len(),
            frame_names.len(),
            dir.display()
        )));
    }
    let gt_poses = if dir.join("gt_images.txt").exists() {
        let cams = fs::File::open(dir.join("gt_cameras.txt"))?;
        let intr = colmap::parse_cameras(std::io::BufReader::new(cams))?;
        let imgs = fs::File::open(dir.join("gt_images.txt"))?;
        let (map, warnings) = colmap::parse_images(std::io::BufReader::new(imgs))?;
        Some(SequencePoses {
            id: format!("{id}_gt"),
            poses: map,
            intrinsics: intr,
            quaternion_warnings: warnings,
        })
    } else {
        None
    };
    Ok(LoadedSequence {
        id: id.to_string(),
        frame_names,
        images,
        gt_depth,
        poses,
        gt_poses,
    })
}

/// Loads every `seq_*` subdirectory of `root`, sorted by name. A root that
/// itself holds `images.txt` is treated as a single sequence.
pub fn load_dataset(root: &Path) -> Result<Vec<LoadedSequence>> {
    if root.join("images.txt").exists() {
        let id = root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "seq".into());
        return Ok(vec![load_sequence(root, &id)?]);
    }
    let mut dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .map(|n| n.to_string_lossy().starts_with("seq_"))
                    .unwrap_or(false)
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "no sequences found under {}",
            root.display()
        )));
    }
    dirs.iter()
        .map(|d| {
            let id = d.file_name().unwrap().to_string_lossy().into_owned();
            load_sequence(d, &id)
        })
        .collect()
}
