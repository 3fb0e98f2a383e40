//! Skeleton file: one line per joint, `joint_index parent_index ox oy oz`,
//! offsets in meters, root parent `-1`. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kinematics::{KinematicTree, NUM_JOINTS};

pub fn parse(text: &str) -> Result<KinematicTree> {
    let mut parent: [Option<i64>; NUM_JOINTS] = [None; NUM_JOINTS];
    let mut offset = vec![Vector3::zeros(); NUM_JOINTS];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let joint: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad joint index {:?}", fields[0])))?;
        if joint >= NUM_JOINTS {
            return Err(err(format!("joint index {joint} out of range")));
        }
        if parent[joint].is_some() {
            return Err(err(format!("joint {joint} listed twice")));
        }
        let p: i64 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad parent index {:?}", fields[1])))?;
        let mut o = [0.0; 3];
        for (k, f) in fields[2..].iter().enumerate() {
            o[k] = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad offset {f:?}")))?;
        }
        parent[joint] = Some(p);
        offset[joint] = Vector3::from(o);
    }
    let parents = parent
        .iter()
        .enumerate()
        .map(|(j, p)| p.ok_or_else(|| Error::Tree(format!("joint {j} missing from skeleton file"))))
        .collect::<Result<Vec<_>>>()?;
    KinematicTree::new(&parents, offset)
}

pub fn serialize(tree: &KinematicTree) -> String {
    let mut out = String::from("# joint_index parent_index ox oy oz (meters)\n");
    for (j, p) in tree.parents_i64().iter().enumerate() {
        let o = tree.offset(j);
        let _ = writeln!(out, "{j} {p} {} {} {}", o.x, o.y, o.z);
    }
    out
}

pub fn load(path: &Path) -> Result<KinematicTree> {
    parse(&std::fs::read_to_string(path)?)
}
