//! Design tables (CSV), VTK and SVG output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Fields;
use crate::materials::MaterialClass;
use crate::mesh::Mesh;
use crate::optimizer::OptimizationResult;

/// Label written for void elements.
pub const VOID_LABEL: &str = "void";

/// Per-element design in tabular form, one row per element.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub num_classes: usize,
    pub area: Vec<f64>,
    pub cx: Vec<f64>,
    pub cy: Vec<f64>,
    /// Control variables, per class.
    pub control: Fields,
    /// Filtered variables, per class.
    pub physical: Fields,
    /// Rounded volume fractions, per class.
    pub zpost: Vec<Vec<f64>>,
    /// Winning class label or [`VOID_LABEL`].
    pub class_label: Vec<String>,
    /// `sum_i zpost_i * mhat_i`.
    pub m_combined: Vec<f64>,
}

impl DesignTable {
    pub fn from_result(mesh: &Mesh, classes: &[MaterialClass], result: &OptimizationResult) -> Self {
        let ne = mesh.num_elements();
        let n = classes.len();
        let phys = &result.design.physical;
        let zpost = result.rounded.z.clone();
        let class_label = result
            .rounded
            .label
            .iter()
            .map(|l| l.map_or(VOID_LABEL.to_string(), |i| classes[i].label.clone()))
            .collect();
        let m_combined = (0..ne)
            .map(|l| (0..n).map(|i| zpost[i][l] * phys.m[i][l]).sum())
            .collect();
        DesignTable {
            num_classes: n,
            area: mesh.areas().to_vec(),
            cx: mesh.centroids().iter().map(|c| c[0]).collect(),
            cy: mesh.centroids().iter().map(|c| c[1]).collect(),
            control: result.design.control.clone(),
            physical: phys.clone(),
            zpost,
            class_label,
            m_combined,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.area.len()
    }

    pub fn header(num_classes: usize) -> Vec<String> {
        let mut h: Vec<String> = ["elem", "area", "cx", "cy"].iter().map(|s| s.to_string()).collect();
        for prefix in ["z", "m", "theta", "zhat", "mhat", "thetahat", "zpost"] {
            h.extend((1..=num_classes).map(|i| format!("{prefix}_{i}")));
        }
        h.push("class_label".into());
        h.push("m_combined".into());
        h
    }

    /// CSV text. Floats use the shortest representation that parses back
    /// to the same value.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::parse("design csv", e.to_string());
        w.write_record(Self::header(self.num_classes)).map_err(csv_err)?;
        let n = self.num_classes;
        for l in 0..self.num_elements() {
            let mut row = vec![l.to_string(), fmt(self.area[l]), fmt(self.cx[l]), fmt(self.cy[l])];
            for f in [
                &self.control.z,
                &self.control.m,
                &self.control.theta,
                &self.physical.z,
                &self.physical.m,
                &self.physical.theta,
                &self.zpost,
            ] {
                row.extend((0..n).map(|i| fmt(f[i][l])));
            }
            row.push(self.class_label[l].clone());
            row.push(fmt(self.m_combined[l]));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse("design csv", e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::parse("design csv", e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::parse("design csv", msg);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < 6 || (header.len() - 6) % 7 != 0 {
            return Err(bad(format!("unexpected column count {}", header.len())));
        }
        let n = (header.len() - 6) / 7;
        if header != Self::header(n) {
            return Err(bad("unexpected header".into()));
        }
        let empty = || vec![Vec::new(); n];
        let mut t = DesignTable {
            num_classes: n,
            area: Vec::new(),
            cx: Vec::new(),
            cy: Vec::new(),
            control: Fields {
                z: empty(),
                m: empty(),
                theta: empty(),
            },
            physical: Fields {
                z: empty(),
                m: empty(),
                theta: empty(),
            },
            zpost: empty(),
            class_label: Vec::new(),
            m_combined: Vec::new(),
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse()
                    .map_err(|e| bad(format!("row {}, column `{}`: {e}", row + 1, header[k])))
            };
            let elem: usize = rec[0].parse().map_err(|e| bad(format!("row {}: {e}", row + 1)))?;
            if elem != row {
                return Err(bad(format!("row {} has element index {elem}", row + 1)));
            }
            t.area.push(num(1)?);
            t.cx.push(num(2)?);
            t.cy.push(num(3)?);
            let fields = [
                &mut t.control.z,
                &mut t.control.m,
                &mut t.control.theta,
                &mut t.physical.z,
                &mut t.physical.m,
                &mut t.physical.theta,
                &mut t.zpost,
            ];
            for (g, f) in fields.into_iter().enumerate() {
                for (i, col) in f.iter_mut().enumerate() {
                    col.push(num(4 + g * n + i)?);
                }
            }
            t.class_label.push(rec[4 + 7 * n].to_string());
            t.m_combined.push(num(5 + 7 * n)?);
        }
        Ok(t)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Class index per element from the label column (`None` for void).
    pub fn class_indices(&self, labels: &[String]) -> Result<Vec<Option<usize>>> {
        self.class_label
            .iter()
            .map(|s| {
                if s == VOID_LABEL {
                    Ok(None)
                } else {
                    labels
                        .iter()
                        .position(|l| l == s)
                        .map(Some)
                        .ok_or_else(|| Error::parse("design csv", format!("unknown class label `{s}`")))
                }
            })
            .collect()
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Display properties of a material class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub label: String,
    pub isotropic: bool,
    /// Direction of largest directional stiffness at zero orientation (radians).
    pub axis_angle: f64,
    /// Orientation period when the orientation is designed.
    pub orientation_period: Option<f64>,
}

impl ClassInfo {
    pub fn from_class(c: &MaterialClass) -> Self {
        let t = c.stiffness(c.m_mid());
        let isotropic = t.relative_difference(&t.rotate(PI / 4.0)) <= 1e-2;
        let dir_stiffness = |a: f64| t.rotate(-a).xxxx();
        let steps = 3600;
        let axis_angle = (0..steps)
            .map(|k| PI * k as f64 / steps as f64)
            .fold((0.0, f64::NEG_INFINITY), |best, a| {
                let e = dir_stiffness(a);
                if e > best.1 + 1e-12 * e.abs() {
                    (a, e)
                } else {
                    best
                }
            })
            .0;
        ClassInfo {
            label: c.label.clone(),
            isotropic,
            axis_angle: if isotropic { 0.0 } else { axis_angle },
            orientation_period: c.period(),
        }
    }
}

/// Legacy ASCII VTK unstructured grid with per-cell data.
pub fn vtk_string(mesh: &Mesh, table: &DesignTable, labels: &[String]) -> Result<String> {
    let idx = table.class_indices(labels)?;
    let mut s = String::new();
    let ne = mesh.num_elements();
    writeln!(s, "# vtk DataFile Version 3.0\nmultitop design\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", mesh.num_nodes()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{} {} 0", p[0], p[1]).unwrap();
    }
    writeln!(s, "CELLS {} {}", ne, 4 * ne).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(s, "5").unwrap();
    }
    writeln!(s, "CELL_DATA {ne}").unwrap();
    let mut scalar = |name: String, vals: &mut dyn Iterator<Item = String>| {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in vals {
            writeln!(s, "{v}").unwrap();
        }
    };
    for i in 0..table.num_classes {
        scalar(format!("zhat_{}", i + 1), &mut table.physical.z[i].iter().map(|v| fmt(*v)));
        scalar(format!("mhat_{}", i + 1), &mut table.physical.m[i].iter().map(|v| fmt(*v)));
        scalar(format!("thetahat_{}", i + 1), &mut table.physical.theta[i].iter().map(|v| fmt(*v)));
        scalar(format!("zpost_{}", i + 1), &mut table.zpost[i].iter().map(|v| fmt(*v)));
    }
    scalar(
        "class".into(),
        &mut idx.iter().map(|c| c.map_or("-1".to_string(), |i| i.to_string())),
    );
    scalar("m_combined".into(), &mut table.m_combined.iter().map(|v| fmt(*v)));
    Ok(s)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const GREYS: [&str; 4] = ["#7f7f7f", "#a6a6a6", "#595959", "#c8c8c8"];

fn class_colors(classes: &[ClassInfo]) -> Vec<&'static str> {
    let (mut c, mut g) = (0, 0);
    classes
        .iter()
        .map(|k| {
            if k.isotropic {
                g += 1;
                GREYS[(g - 1) % GREYS.len()]
            } else {
                c += 1;
                PALETTE[(c - 1) % PALETTE.len()]
            }
        })
        .collect()
}

/// Blue-white-red map of `t` in [0, 1].
fn diverging(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = t / 0.5;
        (59.0 + s * 196.0, 76.0 + s * 179.0, 192.0 + s * 63.0)
    } else {
        let s = (t - 0.5) / 0.5;
        (255.0 - s * 75.0, 255.0 - s * 251.0, 255.0 - s * 217.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Cyclic hue map of `t` in [0, 1).
fn cyclic(t: f64) -> String {
    let h = t.rem_euclid(1.0) * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (55.0 + 200.0 * v) as u8;
    format!("#{:02x}{:02x}{:02x}", c(r), c(g), c(b))
}

/// Three stacked panels: class allocation (isotropic classes grey,
/// anisotropic ones colored and hatched along their stiff direction),
/// the combined parameter `m`, and the orientation of the active class.
pub fn svg_string(mesh: &Mesh, table: &DesignTable, classes: &[ClassInfo]) -> Result<String> {
    if mesh.num_elements() != table.num_elements() {
        return Err(Error::InvalidArgument(format!(
            "mesh has {} elements, design has {}",
            mesh.num_elements(),
            table.num_elements()
        )));
    }
    let labels: Vec<String> = classes.iter().map(|c| c.label.clone()).collect();
    let idx = table.class_indices(&labels)?;
    let colors = class_colors(classes);
    let (lo, hi) = mesh.bounding_box();
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let width = 900.0;
    let scale = width / w;
    let ph = h * scale;
    let title = 24.0;
    let legend = 22.0;
    let total = 3.0 * (ph + title) + legend + 10.0;
    let m_range = {
        let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
        for (l, c) in idx.iter().enumerate() {
            if c.is_some() {
                a = a.min(table.m_combined[l]);
                b = b.max(table.m_combined[l]);
            }
        }
        let r = a.abs().max(b.abs());
        if r.is_finite() && r > 0.0 {
            r
        } else {
            1.0
        }
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}" font-family="sans-serif" font-size="14">"#,
        width + 20.0,
        total,
        width + 20.0,
        total
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let poly = |s: &mut String, y0: f64, l: usize, fill: &str| {
        let t = mesh.triangles()[l];
        let pts: Vec<String> = t
            .iter()
            .map(|&k| {
                let p = mesh.nodes()[k];
                format!("{:.3},{:.3}", 10.0 + (p[0] - lo[0]) * scale, y0 + (hi[1] - p[1]) * scale)
            })
            .collect();
        writeln!(s, r#"<polygon points="{}" fill="{fill}" stroke="{fill}" stroke-width="0.3"/>"#, pts.join(" ")).unwrap();
    };
    let panels = ["Allocation of microstructures", "Variable m", "Variable theta"];
    for (k, name) in panels.iter().enumerate() {
        let y0 = k as f64 * (ph + title) + title;
        writeln!(s, r#"<text x="10" y="{:.1}">{name}</text>"#, y0 - 6.0).unwrap();
        writeln!(
            s,
            r##"<rect x="10" y="{y0:.1}" width="{width:.1}" height="{ph:.1}" fill="white" stroke="#000" stroke-width="0.5"/>"##
        )
        .unwrap();
        for (l, c) in idx.iter().enumerate() {
            let Some(i) = *c else { continue };
            let fill = match k {
                0 => colors[i].to_string(),
                1 => diverging(0.5 + 0.5 * table.m_combined[l] / m_range),
                _ => match classes[i].orientation_period {
                    Some(t) => cyclic(table.physical.theta[i][l] / t),
                    None if classes[i].isotropic => "#d9d9d9".to_string(),
                    None => cyclic(classes[i].axis_angle / PI),
                },
            };
            poly(&mut s, y0, l, &fill);
        }
        if k == 0 {
            for (l, c) in idx.iter().enumerate() {
                let Some(i) = *c else { continue };
                if classes[i].isotropic {
                    continue;
                }
                let a = classes[i].axis_angle + table.physical.theta[i][l];
                let half = 0.45 * (2.0 * table.area[l]).sqrt() * scale;
                let (x, y) = (10.0 + (table.cx[l] - lo[0]) * scale, y0 + (hi[1] - table.cy[l]) * scale);
                let (dx, dy) = (half * a.cos(), -half * a.sin());
                writeln!(
                    s,
                    r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#000" stroke-width="0.6"/>"##,
                    x - dx,
                    y - dy,
                    x + dx,
                    y + dy
                )
                .unwrap();
            }
        }
    }
    let mut x = 10.0;
    let ly = 3.0 * (ph + title) + 12.0;
    for (i, c) in classes.iter().enumerate() {
        writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 10.0,
            colors[i],
            x + 16.0,
            ly,
            xml_escape(&c.label)
        )
        .unwrap();
        x += 30.0 + 8.0 * c.label.len() as f64;
    }
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
