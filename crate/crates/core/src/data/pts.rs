use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

pub const PTS_MAGIC: &str = "acnn-pts";
pub const PTS_VERSION: u32 = 1;

/// Columns stored per row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PtsLayout {
    Xyz,
    Xyzn,
    Xyznl,
}

impl PtsLayout {
    pub fn flag(self) -> &'static str {
        match self {
            PtsLayout::Xyz => "xyz",
            PtsLayout::Xyzn => "xyzn",
            PtsLayout::Xyznl => "xyznl",
        }
    }

    pub fn columns(self) -> usize {
        match self {
            PtsLayout::Xyz => 3,
            PtsLayout::Xyzn => 6,
            PtsLayout::Xyznl => 7,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "xyz" => Some(PtsLayout::Xyz),
            "xyzn" => Some(PtsLayout::Xyzn),
            "xyznl" => Some(PtsLayout::Xyznl),
            _ => None,
        }
    }

    /// Richest layout the cloud can fill.
    pub fn for_cloud(cloud: &PointCloud) -> Result<Self> {
        match (&cloud.normals, &cloud.labels) {
            (None, None) => Ok(PtsLayout::Xyz),
            (Some(_), None) => Ok(PtsLayout::Xyzn),
            (Some(_), Some(_)) => Ok(PtsLayout::Xyznl),
            (None, Some(_)) => Err(Error::invalid("pts files cannot store labels without normals")),
        }
    }
}

/// Text encoding. Floats use the shortest representation that parses back
/// to the same bits.
pub fn format_pts(cloud: &PointCloud) -> Result<String> {
    cloud.validate()?;
    let layout = PtsLayout::for_cloud(cloud)?;
    let mut s = format!("{PTS_MAGIC} {PTS_VERSION} {} {}\n", cloud.len(), layout.flag());
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(n) = &cloud.normals {
            let _ = write!(s, " {} {} {}", n[i].x, n[i].y, n[i].z);
        }
        if let Some(l) = &cloud.labels {
            let _ = write!(s, " {}", l[i]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_pts(text: &str, origin: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty file, expected an acnn-pts header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != PTS_MAGIC {
        return Err(Error::parse(
            origin,
            1,
            format!("expected `{PTS_MAGIC} {PTS_VERSION} <N> <xyz|xyzn|xyznl>`"),
        ));
    }
    if fields[1] != PTS_VERSION.to_string() {
        return Err(Error::parse(origin, 1, format!("unsupported version {}", fields[1])));
    }
    let n: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse(origin, 1, format!("bad point count {}", fields[2])))?;
    let layout =
        PtsLayout::parse(fields[3]).ok_or_else(|| Error::parse(origin, 1, format!("unknown flags {}", fields[3])))?;

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if points.len() == n {
            return Err(Error::parse(origin, line_no, format!("more than {n} rows")));
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != layout.columns() {
            return Err(Error::parse(
                origin,
                line_no,
                format!("{} columns, {} expects {}", cols.len(), layout.flag(), layout.columns()),
            ));
        }
        let mut v = [0.0; 6];
        for (k, c) in cols.iter().take(6).enumerate() {
            let x: f64 = c
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad number {c}")))?;
            if !x.is_finite() {
                return Err(Error::parse(origin, line_no, format!("non-finite value {c}")));
            }
            v[k] = x;
        }
        points.push(Vec3::new(v[0], v[1], v[2]));
        if layout != PtsLayout::Xyz {
            let nrm = Vec3::new(v[3], v[4], v[5]);
            if (nrm.norm() - 1.0).abs() > crate::geometry::UNIT_TOLERANCE {
                return Err(Error::parse(origin, line_no, "normal is not unit length"));
            }
            normals.push(nrm);
        }
        if layout == PtsLayout::Xyznl {
            let l: u32 = cols[6]
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad label {}", cols[6])))?;
            labels.push(l);
        }
    }
    if points.len() != n {
        return Err(Error::parse(
            origin,
            text.lines().count().max(1),
            format!("header promises {n} rows, found {}", points.len()),
        ));
    }
    if n == 0 {
        return Err(Error::parse(origin, 1, "point count must be positive"));
    }
    Ok(PointCloud {
        points,
        normals: (layout != PtsLayout::Xyz).then_some(normals),
        labels: (layout == PtsLayout::Xyznl).then_some(labels),
    })
}

pub fn read_pts(path: &Path) -> Result<PointCloud> {
    parse_pts(&fs::read_to_string(path)?, path)
}

pub fn write_pts(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, format_pts(cloud)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.pts")
    }

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let pts = vec![Vec3::new(0.1, -2.0 / 3.0, 1e-17), Vec3::new(1.0 / 7.0, 5.0, -0.0)];
        let n = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.6, 0.8, 0.0)];
        let c = PointCloud::new(pts).unwrap().with_normals(n).unwrap().with_labels(vec![3, 0]).unwrap();
        let back = parse_pts(&format_pts(&c).unwrap(), p()).unwrap();
        for (a, b) in c.points.iter().zip(&back.points) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
        assert_eq!(back.normals, c.normals);
        assert_eq!(back.labels, c.labels);
    }

    #[test]
    fn empty_file_fails_on_line_one() {
        assert_eq!(line_of(parse_pts("", p()).unwrap_err()), 1);
    }

    #[test]
    fn short_row_is_reported_at_its_line() {
        let text = "acnn-pts 1 2 xyzn\n0 0 0 0 0 1\n1 1 1\n";
        assert_eq!(line_of(parse_pts(text, p()).unwrap_err()), 3);
    }

    #[test]
    fn row_count_mismatch() {
        assert!(parse_pts("acnn-pts 1 3 xyz\n0 0 0\n", p()).is_err());
        assert_eq!(line_of(parse_pts("acnn-pts 1 1 xyz\n0 0 0\n1 1 1\n", p()).unwrap_err()), 3);
    }

    #[test]
    fn bad_headers() {
        for h in ["pts 1 1 xyz", "acnn-pts 2 1 xyz", "acnn-pts 1 x xyz", "acnn-pts 1 1 rgb", "acnn-pts 1 1"] {
            let text = format!("{h}\n0 0 0\n");
            assert_eq!(line_of(parse_pts(&text, p()).unwrap_err()), 1, "{h}");
        }
    }
}
