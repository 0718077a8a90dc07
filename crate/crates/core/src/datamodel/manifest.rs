//! Manifest files tying frame images into datasets.
//!
//! Unlabeled manifests hold one clip per line:
//!
//! ```text
//! clip_id<TAB>frame_period_seconds<TAB>frame_1.pgm,frame_2.pgm,...
//! ```
//!
//! Labeled manifests start with a `classes<TAB>C` header followed by one
//! `image_path<TAB>label_index` line per image. In both, paths resolve
//! relative to the manifest's directory and `#` lines are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{load_pgm, save_pgm, Clip, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Manifest {
    Unlabeled(UnlabeledSet),
    Labeled(LabeledSet),
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .collect();
    match lines.first() {
        Some((_, first)) if first.split('\t').next() == Some("classes") => {
            parse_labeled(path, base, &lines).map(Manifest::Labeled)
        }
        _ => parse_unlabeled(path, base, &lines).map(Manifest::Unlabeled),
    }
}

pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<UnlabeledSet> {
    match load_manifest(path.as_ref())? {
        Manifest::Unlabeled(u) => Ok(u),
        Manifest::Labeled(_) => Err(Error::Validation(format!(
            "{} is a labeled manifest, expected clips",
            path.as_ref().display()
        ))),
    }
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<LabeledSet> {
    match load_manifest(path.as_ref())? {
        Manifest::Labeled(s) => Ok(s),
        Manifest::Unlabeled(_) => Err(Error::Validation(format!(
            "{} is a clip manifest, expected a `classes` header",
            path.as_ref().display()
        ))),
    }
}

fn resolution(manifest: &Path, line: usize, target: &str, reason: impl Into<String>) -> Error {
    Error::Resolution {
        manifest: manifest.to_path_buf(),
        line,
        target: target.to_string(),
        reason: reason.into(),
    }
}

fn malformed(manifest: &Path, line: usize, reason: &str) -> Error {
    Error::Format(format!("{}:{line}: {reason}", manifest.display()))
}

fn load_frame(manifest: &Path, base: &Path, line: usize, rel: &str) -> Result<super::Frame> {
    let full = base.join(rel);
    if !full.is_file() {
        return Err(resolution(manifest, line, rel, "file not found"));
    }
    load_pgm(&full).map_err(|e| resolution(manifest, line, rel, e.to_string()))
}

fn parse_unlabeled(manifest: &Path, base: &Path, lines: &[(usize, &str)]) -> Result<UnlabeledSet> {
    let mut clips = Vec::with_capacity(lines.len());
    for &(no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, period, paths] = fields[..] else {
            return Err(malformed(manifest, no, "expected 3 tab-separated fields"));
        };
        let period: f64 = period
            .trim()
            .parse()
            .map_err(|_| malformed(manifest, no, "frame period is not a number"))?;
        let frames = paths
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| load_frame(manifest, base, no, p))
            .collect::<Result<Vec<_>>>()?;
        clips.push(Clip::new(id.trim(), frames, period)?);
    }
    UnlabeledSet::new(clips)
}

fn parse_labeled(manifest: &Path, base: &Path, lines: &[(usize, &str)]) -> Result<LabeledSet> {
    let (header_no, header) = lines[0];
    let num_classes: usize = header
        .split('\t')
        .nth(1)
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| malformed(manifest, header_no, "expected `classes<TAB>C`"))?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for &(no, line) in &lines[1..] {
        let Some((rel, label)) = line.split_once('\t') else {
            return Err(malformed(manifest, no, "expected `path<TAB>label`"));
        };
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| malformed(manifest, no, "label is not an integer"))?;
        images.push(load_frame(manifest, base, no, rel.trim())?);
        labels.push(label);
    }
    LabeledSet::new(images, labels, num_classes)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes every frame as PGM under `<dir>/<stem>/` and the manifest as
/// `<dir>/<stem>.tsv`. Returns the manifest path.
pub fn save_unlabeled(set: &UnlabeledSet, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut text = String::new();
    for clip in set.clips() {
        let clip_dir = dir.join(stem).join(clip.id());
        ensure_dir(&clip_dir)?;
        let mut paths = Vec::with_capacity(clip.len());
        for (t, frame) in clip.frames().iter().enumerate() {
            let rel = format!("{stem}/{}/{t:05}.pgm", clip.id());
            save_pgm(frame, dir.join(&rel))?;
            paths.push(rel);
        }
        writeln!(text, "{}\t{}\t{}", clip.id(), clip.frame_period(), paths.join(",")).unwrap();
    }
    let manifest = dir.join(format!("{stem}.tsv"));
    write_text(&manifest, &text)?;
    Ok(manifest)
}

/// Labeled counterpart of [`save_unlabeled`].
pub fn save_labeled(set: &LabeledSet, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    ensure_dir(&dir.join(stem))?;
    let mut text = format!("classes\t{}\n", set.num_classes());
    for (i, (frame, label)) in set.images().iter().zip(set.labels()).enumerate() {
        let rel = format!("{stem}/{i:05}.pgm");
        save_pgm(frame, dir.join(&rel))?;
        writeln!(text, "{rel}\t{label}").unwrap();
    }
    let manifest = dir.join(format!("{stem}.tsv"));
    write_text(&manifest, &text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Frame;

    fn write_frames(dir: &Path, names: &[&str]) {
        for (i, name) in names.iter().enumerate() {
            let f = Frame::filled(2, 2, i as f64 / 10.0).unwrap();
            save_pgm(&f, dir.join(name)).unwrap();
        }
    }

    #[test]
    fn one_clip_three_frames_in_order() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &["c.pgm", "a.pgm", "b.pgm"]);
        let m = dir.path().join("u.tsv");
        fs::write(&m, "# clips\nclip0\t0.5\tc.pgm,a.pgm,b.pgm\n").unwrap();
        let u = load_unlabeled(&m).unwrap();
        assert_eq!(u.clips().len(), 1);
        let clip = &u.clips()[0];
        assert_eq!(clip.len(), 3);
        assert_eq!(clip.frame_period(), 0.5);
        let firsts: Vec<f64> = clip.frames().iter().map(|f| f.pixels()[0]).collect();
        let expect: Vec<f64> = [0.0, 0.1, 0.2]
            .iter()
            .map(|v: &f64| (v * 255.0).round() / 255.0)
            .collect();
        assert_eq!(firsts, expect);
    }

    #[test]
    fn labeled_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &["x.pgm", "y.pgm"]);
        let m = dir.path().join("s.tsv");
        fs::write(&m, "classes\t3\nx.pgm\t2\ny.pgm\t0\n").unwrap();
        let s = load_labeled(&m).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.labels(), &[2, 0]);
        assert_eq!(s.num_classes(), 3);
        assert!(load_unlabeled(&m).is_err());
    }

    #[test]
    fn missing_frame_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &["a.pgm"]);
        let m = dir.path().join("u.tsv");
        fs::write(&m, "c0\t1\ta.pgm\nc1\t1\ta.pgm,ghost.pgm\n").unwrap();
        let err = load_manifest(&m).unwrap_err();
        match &err {
            Error::Resolution { line, target, .. } => {
                assert_eq!(*line, 2);
                assert_eq!(target, "ghost.pgm");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("ghost.pgm"));
    }

    #[test]
    fn duplicate_clip_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &["a.pgm"]);
        let m = dir.path().join("u.tsv");
        fs::write(&m, "c0\t1\ta.pgm\nc0\t1\ta.pgm\n").unwrap();
        assert!(matches!(load_manifest(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = (0..4)
            .map(|t| Frame::new(2, 1, vec![t as f64 / 4.0, 1.0]).unwrap())
            .collect();
        let u = UnlabeledSet::new(vec![
            Clip::new("a", frames[..2].to_vec(), 1.0).unwrap(),
            Clip::new("b", frames[2..].to_vec(), 0.25).unwrap(),
        ])
        .unwrap();
        let path = save_unlabeled(&u, dir.path(), "clips").unwrap();
        let back = load_unlabeled(path).unwrap();
        assert_eq!(back.clips().len(), 2);
        assert_eq!(back.clips()[1].frame_period(), 0.25);
        assert_eq!(back.clips()[1].frames()[0].pixels(), &[128.0 / 255.0, 1.0]);

        let s = LabeledSet::new(frames.clone(), vec![0, 1, 1, 0], 2).unwrap();
        let back = load_labeled(save_labeled(&s, dir.path(), "train").unwrap()).unwrap();
        assert_eq!(back.labels(), s.labels());
    }
}
