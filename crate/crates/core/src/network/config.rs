//! Network configuration and its line-oriented text form:
//!
//! ```text
//! # comment
//! layer centroids=128 rings=0:0.2:8,0.2:0.4:16 features=8,8,16|16,16,32
//! layer centroids=1 rings=0:10:32 features=64,128,256 kernel=1
//! head class c=5 fc=128,64 dropout=0.5
//! ```
//!
//! Layer keys: `centroids`, `rings` (`inner:outer:k`, comma separated),
//! `features` (one comma list per ring, rings separated by `|`) and optional
//! `kernel` (odd, default 3). Head lines are `head class c= fc= dropout= [bn=]`
//! or `head segment m= width=`. Unknown keys are rejected.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::RingSpec;

pub const DEFAULT_KERNEL: usize = 3;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerConfig {
    pub centroids: usize,
    pub rings: Vec<RingSpec>,
    /// Sequential convolution widths, one list per ring.
    pub features: Vec<Vec<usize>>,
    /// Kernel size along the ring (1 for the pointwise final layer).
    pub kernel: usize,
}

impl LayerConfig {
    /// Channels produced by this layer: the concatenated last widths.
    pub fn out_channels(&self) -> usize {
        self.features.iter().map(|w| *w.last().unwrap()).sum()
    }

    /// A single-centroid layer pools the whole level, with positions taken
    /// relative to the origin of the cloud's frame.
    pub fn is_global(&self) -> bool {
        self.centroids == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadConfig {
    Classification {
        classes: usize,
        fc: Vec<usize>,
        dropout: f64,
        batch_norm: bool,
    },
    Segmentation {
        parts: usize,
        width: usize,
    },
}

impl HeadConfig {
    /// Number of output logits per prediction.
    pub fn outputs(&self) -> usize {
        match self {
            HeadConfig::Classification { classes, .. } => *classes,
            HeadConfig::Segmentation { parts, .. } => *parts,
        }
    }

    pub fn is_segmentation(&self) -> bool {
        matches!(self, HeadConfig::Segmentation { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub layers: Vec<LayerConfig>,
    pub head: HeadConfig,
}

fn ring(r_inner: f64, r_outer: f64, k: usize) -> RingSpec {
    RingSpec { r_inner, r_outer, k }
}

impl NetworkConfig {
    /// The three-layer classification encoder at full published size
    /// (1024 input points).
    pub fn acnn_3l(classes: usize) -> Self {
        NetworkConfig {
            layers: vec![
                LayerConfig {
                    centroids: 512,
                    rings: vec![ring(0.0, 0.1, 16), ring(0.1, 0.2, 48)],
                    features: vec![vec![32, 32, 64], vec![64, 64, 128]],
                    kernel: 3,
                },
                LayerConfig {
                    centroids: 128,
                    rings: vec![ring(0.1, 0.2, 16), ring(0.3, 0.4, 48)],
                    features: vec![vec![64, 64, 128], vec![128, 128, 256]],
                    kernel: 3,
                },
                LayerConfig {
                    centroids: 1,
                    rings: vec![ring(0.0, 10.0, 128)],
                    features: vec![vec![256, 512, 1024]],
                    kernel: 1,
                },
            ],
            head: HeadConfig::Classification {
                classes,
                fc: vec![512, 256],
                dropout: DEFAULT_DROPOUT,
                batch_norm: true,
            },
        }
    }

    /// Quarter-width three-layer encoder for 256-point clouds. Radii are wider
    /// than the full-size model so the inner rings stay populated.
    pub fn desk_3l(classes: usize) -> Self {
        NetworkConfig {
            layers: vec![
                LayerConfig {
                    centroids: 128,
                    rings: vec![ring(0.0, 0.25, 8), ring(0.25, 0.5, 16)],
                    features: vec![vec![8, 8, 16], vec![16, 16, 32]],
                    kernel: 3,
                },
                LayerConfig {
                    centroids: 32,
                    rings: vec![ring(0.25, 0.5, 8), ring(0.6, 0.9, 16)],
                    features: vec![vec![16, 16, 32], vec![32, 32, 64]],
                    kernel: 3,
                },
                LayerConfig {
                    centroids: 1,
                    rings: vec![ring(0.0, 10.0, 32)],
                    features: vec![vec![64, 128, 256]],
                    kernel: 1,
                },
            ],
            head: HeadConfig::Classification {
                classes,
                fc: vec![256, 128],
                dropout: DEFAULT_DROPOUT,
                batch_norm: true,
            },
        }
    }

    /// Four-layer segmentation encoder at full published size.
    pub fn acnn_4l(parts: usize) -> Self {
        NetworkConfig {
            layers: vec![
                LayerConfig {
                    centroids: 512,
                    rings: vec![ring(0.0, 0.1, 16), ring(0.1, 0.2, 48)],
                    features: vec![vec![32, 32, 64], vec![64, 64, 128]],
                    kernel: 3,
                },
                LayerConfig {
                    centroids: 128,
                    rings: vec![ring(0.1, 0.2, 16), ring(0.3, 0.4, 48)],
                    features: vec![vec![64, 64, 128], vec![128, 128, 256]],
                    kernel: 3,
                },
                LayerConfig {
                    centroids: 32,
                    rings: vec![ring(0.2, 0.4, 16), ring(0.6, 0.8, 48)],
                    features: vec![vec![128, 128, 256], vec![256, 256, 512]],
                    kernel: 3,
                },
                LayerConfig {
                    centroids: 1,
                    rings: vec![ring(0.0, 10.0, 32)],
                    features: vec![vec![512, 768, 1024]],
                    kernel: 1,
                },
            ],
            head: HeadConfig::Segmentation { parts, width: 128 },
        }
    }

    /// Small segmentation model for 256-point part-labelled clouds.
    pub fn desk_seg(parts: usize) -> Self {
        let mut c = Self::desk_3l(parts);
        c.head = HeadConfig::Segmentation { parts, width: 64 };
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let ctx = |m: String| Error::invalid(format!("layer {}: {m}", l + 1));
            if layer.centroids == 0 {
                return Err(ctx("centroids must be positive".into()));
            }
            if layer.rings.is_empty() {
                return Err(ctx("needs at least one ring".into()));
            }
            if layer.features.len() != layer.rings.len() {
                return Err(ctx(format!(
                    "{} width lists for {} rings",
                    layer.features.len(),
                    layer.rings.len()
                )));
            }
            if layer.features.iter().any(|w| w.is_empty() || w.contains(&0)) {
                return Err(ctx("feature widths must be positive and non-empty".into()));
            }
            if layer.kernel == 0 || layer.kernel % 2 == 0 {
                return Err(ctx(format!("kernel size must be odd, got {}", layer.kernel)));
            }
            if layer.is_global() && layer.kernel != 1 {
                return Err(ctx("a single-centroid layer has no ring order and needs kernel=1".into()));
            }
            for (i, r) in layer.rings.iter().enumerate() {
                r.validate().map_err(|e| ctx(e.to_string()))?;
                if layer.kernel - 1 > r.k {
                    return Err(ctx(format!("ring {} has k={} < kernel-1", i + 1, r.k)));
                }
            }
            for pair in layer.rings.windows(2) {
                if pair[0].r_outer > pair[1].r_inner {
                    return Err(ctx(format!(
                        "rings ({}, {}] and ({}, {}] overlap",
                        pair[0].r_inner, pair[0].r_outer, pair[1].r_inner, pair[1].r_outer
                    )));
                }
            }
            if l > 0 && layer.centroids >= self.layers[l - 1].centroids {
                return Err(ctx("centroid counts must strictly decrease".into()));
            }
        }
        match &self.head {
            HeadConfig::Classification { classes, fc, dropout, .. } => {
                if *classes == 0 || fc.contains(&0) {
                    return Err(Error::invalid("head widths must be positive"));
                }
                if !(0.0..1.0).contains(dropout) {
                    return Err(Error::invalid(format!("dropout {dropout} outside [0, 1)")));
                }
            }
            HeadConfig::Segmentation { parts, width } => {
                if *parts == 0 || *width == 0 {
                    return Err(Error::invalid("head widths must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for layer in &self.layers {
            let rings: Vec<String> = layer
                .rings
                .iter()
                .map(|r| format!("{}:{}:{}", r.r_inner, r.r_outer, r.k))
                .collect();
            let feats: Vec<String> = layer.features.iter().map(|w| join(w)).collect();
            write!(
                s,
                "layer centroids={} rings={} features={}",
                layer.centroids,
                rings.join(","),
                feats.join("|")
            )
            .unwrap();
            if layer.kernel != DEFAULT_KERNEL {
                write!(s, " kernel={}", layer.kernel).unwrap();
            }
            s.push('\n');
        }
        match &self.head {
            HeadConfig::Classification {
                classes,
                fc,
                dropout,
                batch_norm,
            } => {
                write!(s, "head class c={classes} fc={} dropout={dropout}", join(fc)).unwrap();
                if !batch_norm {
                    s.push_str(" bn=0");
                }
            }
            HeadConfig::Segmentation { parts, width } => {
                write!(s, "head segment m={parts} width={width}").unwrap();
            }
        }
        s.push('\n');
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut layers = Vec::new();
        let mut head = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |m: String| Error::parse(origin, lineno, m);
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            match words.next().unwrap() {
                "layer" => {
                    let kv = key_values(words, &["centroids", "rings", "features", "kernel"]).map_err(err)?;
                    let need = |k: &str| kv.get(k).copied().ok_or_else(|| err(format!("missing {k}=")));
                    let centroids = parse_num(need("centroids")?).map_err(err)?;
                    let rings = need("rings")?
                        .split(',')
                        .map(|r| parse_ring(r).map_err(err))
                        .collect::<Result<Vec<_>>>()?;
                    let features = need("features")?
                        .split('|')
                        .map(|ws| ws.split(',').map(parse_num).collect::<Result<Vec<usize>, _>>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(err)?;
                    let kernel = match kv.get("kernel") {
                        Some(k) => parse_num(k).map_err(err)?,
                        None => DEFAULT_KERNEL,
                    };
                    layers.push(LayerConfig {
                        centroids,
                        rings,
                        features,
                        kernel,
                    });
                }
                "head" => {
                    if head.is_some() {
                        return Err(err("duplicate head line".into()));
                    }
                    match words.next() {
                        Some("class") => {
                            let kv = key_values(words, &["c", "fc", "dropout", "bn"]).map_err(err)?;
                            let classes = parse_num(kv.get("c").ok_or_else(|| err("missing c=".into()))?)
                                .map_err(err)?;
                            let fc = match kv.get("fc") {
                                Some(v) => v.split(',').map(parse_num).collect::<Result<Vec<_>, _>>().map_err(err)?,
                                None => vec![512, 256],
                            };
                            let dropout = match kv.get("dropout") {
                                Some(v) => v.parse::<f64>().map_err(|_| err(format!("bad dropout {v}")))?,
                                None => DEFAULT_DROPOUT,
                            };
                            let batch_norm = match kv.get("bn").copied() {
                                None | Some("1") => true,
                                Some("0") => false,
                                Some(v) => return Err(err(format!("bn must be 0 or 1, got {v}"))),
                            };
                            head = Some(HeadConfig::Classification {
                                classes,
                                fc,
                                dropout,
                                batch_norm,
                            });
                        }
                        Some("segment") => {
                            let kv = key_values(words, &["m", "width"]).map_err(err)?;
                            let parts = parse_num(kv.get("m").ok_or_else(|| err("missing m=".into()))?)
                                .map_err(err)?;
                            let width = parse_num(kv.get("width").ok_or_else(|| err("missing width=".into()))?)
                                .map_err(err)?;
                            head = Some(HeadConfig::Segmentation { parts, width });
                        }
                        other => {
                            return Err(err(format!(
                                "head kind must be class or segment, got {}",
                                other.unwrap_or("nothing")
                            )))
                        }
                    }
                }
                other => return Err(err(format!("unknown directive {other}"))),
            }
        }
        let head = head.ok_or_else(|| Error::parse(origin, 0, "missing head line"))?;
        let config = NetworkConfig { layers, head };
        config
            .validate()
            .map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }
}

fn join(ws: &[usize]) -> String {
    ws.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

fn key_values<'a>(
    words: impl Iterator<Item = &'a str>,
    allowed: &[&str],
) -> std::result::Result<HashMap<&'a str, &'a str>, String> {
    let mut kv = HashMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| format!("expected key=value, got {w}"))?;
        if !allowed.contains(&k) {
            return Err(format!("unknown key {k}"));
        }
        if kv.insert(k, v).is_some() {
            return Err(format!("duplicate key {k}"));
        }
    }
    Ok(kv)
}

fn parse_num(s: &str) -> std::result::Result<usize, String> {
    s.trim().parse().map_err(|_| format!("expected a non-negative integer, got {s}"))
}

fn parse_ring(s: &str) -> std::result::Result<RingSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("ring must be inner:outer:k, got {s}"));
    }
    let f = |v: &str| v.parse::<f64>().map_err(|_| format!("bad radius {v}"));
    let r = RingSpec {
        r_inner: f(parts[0])?,
        r_outer: f(parts[1])?,
        k: parse_num(parts[2])?,
    };
    r.validate().map_err(|e| e.to_string())?;
    Ok(r)
}

/// Parse a comma-separated ring list `inner:outer:k,...`.
pub fn parse_rings(s: &str) -> Result<Vec<RingSpec>> {
    s.split(',')
        .map(|r| parse_ring(r).map_err(Error::InvalidArgument))
        .collect()
}
