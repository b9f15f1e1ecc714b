//! ASCII PLY for meshes and point clouds. Point clouds record their
//! condition/free split in a `comment split <n>` header line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PointCloud, TriMesh};
use crate::error::{Error, Result};

fn write_file(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_mesh_ply(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "ply\nformat ascii 1.0").unwrap();
    writeln!(s, "element vertex {}", mesh.vertices.len()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    writeln!(s, "element face {}", mesh.triangles.len()).unwrap();
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in &mesh.vertices {
        writeln!(s, "{} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    write_file(path.as_ref(), s)
}

pub fn write_point_cloud_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    cloud.validate()?;
    let mut s = String::new();
    writeln!(s, "ply\nformat ascii 1.0\ncomment split {}", cloud.split).unwrap();
    writeln!(s, "element vertex {}", cloud.len()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        write!(s, "{} {} {}", p[0], p[1], p[2]).unwrap();
        if let Some(n) = &cloud.normals {
            write!(s, " {} {} {}", n[i][0], n[i][1], n[i][2]).unwrap();
        }
        s.push('\n');
    }
    write_file(path.as_ref(), s)
}

pub fn read_point_cloud_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Header {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing `ply` magic".into()));
    }
    let mut split = 0usize;
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(bad("only ascii PLY is supported".into())),
            ["comment", "split", n] => {
                split = n.parse().map_err(|_| bad(format!("bad split `{n}`")))?;
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad(format!("bad count `{n}`")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(bad(format!("unexpected header line `{line}`"))),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(bad("vertex element lacks x/y/z".into())),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(x), Some(y), Some(z)) => Some((x, y, z)),
        _ => None,
    };
    let mut points = Vec::with_capacity(count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| bad("truncated vertex list".into()))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("bad vertex line `{line}`")))?;
        if values.len() < props.len() {
            return Err(bad(format!("short vertex line `{line}`")));
        }
        points.push([values[ix], values[iy], values[iz]]);
        if let (Some(list), Some((x, y, z))) = (normals.as_mut(), normal_cols) {
            list.push([values[x], values[y], values[z]]);
        }
    }
    let cloud = PointCloud {
        points,
        split,
        normals,
    };
    cloud.validate()?;
    Ok(cloud)
}
