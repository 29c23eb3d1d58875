//! ASCII PLY point clouds as sphere scenes.

use std::path::Path;

use nalgebra::Vector3;

use super::{Sphere, SphereScene};
use crate::error::{Error, Result};

/// Defaults applied to every imported point.
#[derive(Debug, Clone)]
pub struct PointCloudImport {
    pub feature_dim: usize,
    pub background: Vec<f64>,
    pub radius: f64,
    pub opacity: f64,
}

impl Default for PointCloudImport {
    fn default() -> Self {
        Self {
            feature_dim: 3,
            background: vec![0.0; 3],
            radius: 0.05,
            opacity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarKind {
    Integer { max: f64 },
    Float,
}

fn scalar_kind(name: &str) -> Option<ScalarKind> {
    Some(match name {
        "char" | "int8" => ScalarKind::Integer { max: 127.0 },
        "uchar" | "uint8" => ScalarKind::Integer { max: 255.0 },
        "short" | "int16" => ScalarKind::Integer { max: 32767.0 },
        "ushort" | "uint16" => ScalarKind::Integer { max: 65535.0 },
        "int" | "int32" => ScalarKind::Integer { max: 2147483647.0 },
        "uint" | "uint32" => ScalarKind::Integer { max: 4294967295.0 },
        "float" | "float32" | "float64" | "double" => ScalarKind::Float,
        _ => return None,
    })
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    /// `None` marks a list property.
    properties: Vec<(String, Option<ScalarKind>)>,
}

pub fn import_point_cloud(path: impl AsRef<Path>, opts: &PointCloudImport) -> Result<SphereScene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_point_cloud(&text, opts)
}

/// Parses ASCII PLY text. Vertices need `x`, `y`, `z`; `red`/`green`/`blue`
/// (or `r`/`g`/`b`) fill the leading feature channels, integer colors are
/// scaled to `[0, 1]`. Other properties and elements are ignored.
pub fn parse_point_cloud(text: &str, opts: &PointCloudImport) -> Result<SphereScene> {
    let mut scene = SphereScene::new(opts.feature_dim, opts.background.clone())?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => {
            return Err(Error::Parse {
                line: n,
                message: "missing 'ply' signature".into(),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut last_line = 1;
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        last_line = n;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(Error::Parse {
                        line: n,
                        message: "only ascii PLY is supported".into(),
                    });
                }
            }
            Some("element") => {
                let name = tok.next().unwrap_or_default().to_string();
                let count = tok.next().and_then(|c| c.parse().ok()).ok_or(Error::Parse {
                    line: n,
                    message: "element needs a name and a count".into(),
                })?;
                elements.push(Element {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or(Error::Parse {
                    line: n,
                    message: "property before any element".into(),
                })?;
                let ty = tok.next().unwrap_or_default();
                if ty == "list" {
                    let name = tok.nth(2).unwrap_or_default().to_string();
                    el.properties.push((name, None));
                } else {
                    let kind = scalar_kind(ty).ok_or(Error::Parse {
                        line: n,
                        message: format!("unknown property type '{ty}'"),
                    })?;
                    let name = tok.next().unwrap_or_default().to_string();
                    el.properties.push((name, Some(kind)));
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => {
                return Err(Error::Parse {
                    line: n,
                    message: format!("unexpected header keyword '{other}'"),
                })
            }
        }
    }
    if !header_done {
        return Err(Error::Parse {
            line: last_line,
            message: "header not terminated by end_header".into(),
        });
    }

    let mut spheres = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let find = |names: &[&str]| {
            el.properties
                .iter()
                .position(|(p, k)| k.is_some() && names.contains(&p.as_str()))
        };
        let (xi, yi, zi) = (find(&["x"]), find(&["y"]), find(&["z"]));
        let color = [find(&["red", "r"]), find(&["green", "g"]), find(&["blue", "b"])];
        if is_vertex && (xi.is_none() || yi.is_none() || zi.is_none()) {
            return Err(Error::Format("vertex element lacks x, y or z".into()));
        }
        let has_color = color.iter().all(Option::is_some);
        let has_list = el.properties.iter().any(|(_, k)| k.is_none());

        for _ in 0..el.count {
            let (n, line) = loop {
                match lines.next() {
                    Some((n, "")) => last_line = n,
                    Some(x) => break x,
                    None => {
                        return Err(Error::Parse {
                            line: last_line + 1,
                            message: format!("unexpected end of file in element '{}'", el.name),
                        })
                    }
                }
            };
            last_line = n;
            if !is_vertex {
                continue;
            }
            if has_list {
                return Err(Error::Parse {
                    line: n,
                    message: "list properties on vertices are not supported".into(),
                });
            }
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: n,
                    message: format!("bad number: {e}"),
                })?;
            if values.len() != el.properties.len() {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected {} values, found {}", el.properties.len(), values.len()),
                });
            }
            let at = |i: Option<usize>| values[i.unwrap()];
            let mut feature = scene.background().to_vec();
            if has_color {
                for (c, idx) in color.iter().enumerate().take(opts.feature_dim) {
                    let raw = at(*idx);
                    feature[c] = match el.properties[idx.unwrap()].1 {
                        Some(ScalarKind::Integer { max }) => raw / max,
                        _ => raw,
                    };
                }
            }
            let sphere = Sphere::new(Vector3::new(at(xi), at(yi), at(zi)), opts.radius, opts.opacity, feature);
            sphere
                .check(opts.feature_dim)
                .map_err(|message| Error::Parse { line: n, message })?;
            spheres.push(sphere);
        }
    }
    scene.add_spheres(spheres)?;
    Ok(scene)
}
