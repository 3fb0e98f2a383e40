//! Sequence files.
//!
//! ```text
//! # kinest-seq v1 kind=pose frames=2 columns=132 fps=60
//! 1.00000000e0 0.00000000e0 ...
//! ```
//!
//! One line per frame of whitespace-separated values. Values are written
//! with 9 significant digits, which round-trips every `f32`. A `pose` file
//! has 132 columns of 6D rotations, optionally followed by 3 columns of
//! root translation in meters.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::model::{Matrix, INPUT_DIM};
use crate::pose::{PoseSequence, POSE_DIM};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "kinest-seq";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqKind {
    SparseInput,
    Pose,
}

impl SeqKind {
    fn accepts(self, columns: usize) -> bool {
        match self {
            SeqKind::SparseInput => columns == INPUT_DIM,
            SeqKind::Pose => columns == POSE_DIM || columns == POSE_DIM + 3,
        }
    }
}

impl fmt::Display for SeqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeqKind::SparseInput => "sparse_input",
            SeqKind::Pose => "pose",
        })
    }
}

impl FromStr for SeqKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse_input" => Ok(SeqKind::SparseInput),
            "pose" => Ok(SeqKind::Pose),
            _ => Err(Error::InvalidValue(format!("unknown sequence kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFile {
    kind: SeqKind,
    fps: f64,
    columns: usize,
    data: Vec<f32>,
}

impl SequenceFile {
    pub fn new(kind: SeqKind, fps: f64, columns: usize, data: Vec<f32>) -> Result<Self> {
        if !kind.accepts(columns) {
            return Err(Error::InvalidValue(format!("{columns} columns not valid for kind {kind}")));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidValue(format!("fps {fps} must be positive")));
        }
        if !data.len().is_multiple_of(columns) {
            return Err(Error::InvalidValue(format!(
                "{} values do not fill rows of {columns}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite value {v}")));
        }
        Ok(Self {
            kind,
            fps,
            columns,
            data,
        })
    }

    pub fn from_matrix(kind: SeqKind, fps: f64, m: &Matrix) -> Result<Self> {
        Self::new(kind, fps, m.cols(), m.data().to_vec())
    }

    /// Pose values rounded to `f32`; root translations included when present.
    pub fn from_pose(pose: &PoseSequence, fps: f64) -> Result<Self> {
        let columns = if pose.root().is_some() { POSE_DIM + 3 } else { POSE_DIM };
        let flat = pose.to_flat();
        let mut data = Vec::with_capacity(pose.len() * columns);
        for (t, row) in flat.chunks(POSE_DIM).enumerate() {
            data.extend(row.iter().map(|&v| v as f32));
            if pose.root().is_some() {
                data.extend(pose.root_at(t).iter().map(|&v| v as f32));
            }
        }
        Self::new(SeqKind::Pose, fps, columns, data)
    }

    pub fn kind(&self) -> SeqKind {
        self.kind
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.columns
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.frames(), self.columns, self.data.clone()).expect("validated shape")
    }

    pub fn to_pose(&self) -> Result<PoseSequence> {
        if self.kind != SeqKind::Pose {
            return Err(Error::InvalidValue(format!("expected a pose file, found {}", self.kind)));
        }
        let mut rot = Vec::with_capacity(self.frames() * POSE_DIM);
        let mut root = Vec::new();
        for row in self.data.chunks(self.columns) {
            rot.extend(row[..POSE_DIM].iter().map(|&v| v as f64));
            if self.columns > POSE_DIM {
                root.push(Vector3::new(row[POSE_DIM] as f64, row[POSE_DIM + 1] as f64, row[POSE_DIM + 2] as f64));
            }
        }
        let root = (self.columns > POSE_DIM).then_some(root);
        PoseSequence::from_flat(&rot, root)
    }

    pub fn serialize(&self) -> String {
        let mut out = format!(
            "# {MAGIC} v{FORMAT_VERSION} kind={} frames={} columns={} fps={}\n",
            self.kind,
            self.frames(),
            self.columns,
            self.fps
        );
        for row in self.data.chunks(self.columns) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
        let header = Header::parse(header)?;
        let mut data = Vec::with_capacity(header.frames * header.columns);
        let mut rows = 0;
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f32 = tok
                    .parse()
                    .map_err(|_| parse_err(i + 1, format!("bad number {tok:?}")))?;
                data.push(v);
            }
            if data.len() - before != header.columns {
                return Err(parse_err(
                    i + 1,
                    format!("expected {} columns, found {}", header.columns, data.len() - before),
                ));
            }
            rows += 1;
        }
        if rows != header.frames {
            return Err(parse_err(1, format!("header says {} frames, found {rows}", header.frames)));
        }
        Self::new(header.kind, header.fps, header.columns, data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

struct Header {
    kind: SeqKind,
    frames: usize,
    columns: usize,
    fps: f64,
}

impl Header {
    fn parse(line: &str) -> Result<Self> {
        let mut tokens = line
            .strip_prefix('#')
            .ok_or_else(|| parse_err(1, "missing header"))?
            .split_whitespace();
        if tokens.next() != Some(MAGIC) {
            return Err(parse_err(1, "not a sequence file"));
        }
        let version = tokens.next().unwrap_or("");
        if version != format!("v{FORMAT_VERSION}") {
            return Err(parse_err(1, format!("unsupported version {version:?}")));
        }
        let (mut kind, mut frames, mut columns, mut fps) = (None, None, None, None);
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| parse_err(1, format!("bad header field {tok:?}")))?;
            let bad = || parse_err(1, format!("bad value for {key}: {value:?}"));
            match key {
                "kind" => kind = Some(value.parse::<SeqKind>().map_err(|_| bad())?),
                "frames" => frames = Some(value.parse::<usize>().map_err(|_| bad())?),
                "columns" => columns = Some(value.parse::<usize>().map_err(|_| bad())?),
                "fps" => fps = Some(value.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(parse_err(1, format!("unknown header field {key:?}"))),
            }
        }
        let missing = |name: &str| parse_err(1, format!("header lacks {name}"));
        Ok(Self {
            kind: kind.ok_or_else(|| missing("kind"))?,
            frames: frames.ok_or_else(|| missing("frames"))?,
            columns: columns.ok_or_else(|| missing("columns"))?,
            fps: fps.ok_or_else(|| missing("fps"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut data: Vec<f32> = (0..5 * INPUT_DIM)
            .map(|_| rng.gen::<f32>() * 10f32.powi(rng.gen_range(-30..30)))
            .collect();
        data[0] = f32::MIN_POSITIVE;
        data[1] = f32::MAX;
        data[2] = -0.0;
        let f = SequenceFile::new(SeqKind::SparseInput, 60.0, INPUT_DIM, data).unwrap();
        let back = SequenceFile::parse(&f.serialize()).unwrap();
        assert_eq!(f.data().len(), back.data().len());
        for (a, b) in f.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.fps(), 60.0);
    }

    #[test]
    fn pose_with_root() {
        let pose = PoseSequence::identity(3)
            .with_root(Some(vec![Vector3::new(0.5, 1.0, -2.0); 3]))
            .unwrap();
        let f = SequenceFile::from_pose(&pose, 30.0).unwrap();
        assert_eq!(f.columns(), 135);
        let back = SequenceFile::parse(&f.serialize()).unwrap().to_pose().unwrap();
        assert_eq!(back, pose);
    }

    #[test]
    fn rejects_malformed() {
        let good = SequenceFile::from_pose(&PoseSequence::identity(2), 60.0)
            .unwrap()
            .serialize();
        assert!(SequenceFile::parse(&good.replace("frames=2", "frames=3")).is_err());
        assert!(SequenceFile::parse(&good.replace("v1", "v2")).is_err());
        assert!(SequenceFile::parse(&good.replace("columns=132", "columns=131")).is_err());
        assert!(SequenceFile::parse(&good.replace("kind=pose", "kind=mesh")).is_err());
        assert!(SequenceFile::parse(&good.replacen("1.00000000e0", "nan", 1)).is_err());
        assert!(SequenceFile::parse("").is_err());
        assert!(SequenceFile::new(SeqKind::SparseInput, 60.0, 132, vec![]).is_err());
    }

    #[test]
    fn header_layout() {
        let f = SequenceFile::from_pose(&PoseSequence::identity(1), 60.0).unwrap();
        let text = f.serialize();
        assert!(text.starts_with("# kinest-seq v1 kind=pose frames=1 columns=132 fps=60\n"));
        assert!(text.lines().nth(1).unwrap().starts_with("1.00000000e0 0.00000000e0"));
    }
}
