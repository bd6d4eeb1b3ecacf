//! Binary feature cache: persistence diagrams, frozen image grids and PI
//! tensors of every graph, keyed by the feature hash of the config.
//!
//! Layout (little endian): magic `TOPOCACH`, format byte, hash string, the
//! writing build's version string, graph count, filtration tags, labels, diagrams, grids, then PI tensors.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::filtration::FiltrationKind;
use crate::persistence::{
    FiltrationDiagrams, GraphDiagrams, GridRange, PersistenceDiagram, PersistencePoint, PiGrids, HOMOLOGY_DIMS,
};
use crate::tensor::DenseTensor;

pub const CACHE_MAGIC: &[u8; 8] = b"TOPOCACH";
pub const CACHE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub feature_hash: String,
    /// Version of the build that wrote the cache; ignored on write.
    pub version: String,
    pub filtrations: Vec<FiltrationKind>,
    pub labels: Vec<usize>,
    pub diagrams: Vec<GraphDiagrams>,
    pub grids: PiGrids,
    /// `K × 2 × P × P` per graph.
    pub pi: Vec<DenseTensor>,
}

impl FeatureCache {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pi_shape(&self) -> Vec<usize> {
        self.pi.first().map(|t| t.shape().to_vec()).unwrap_or_default()
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u16::<LE>(s.len() as u16)?;
    w.write_all(s.as_bytes())
}

pub fn write_cache(path: &Path, cache: &FeatureCache) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tcache.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_u8(CACHE_VERSION)?;
        write_str(&mut w, &cache.feature_hash)?;
        write_str(&mut w, crate::ARTIFACT_VERSION)?;
        w.write_u32::<LE>(cache.len() as u32)?;
        w.write_u8(cache.filtrations.len() as u8)?;
        for f in &cache.filtrations {
            w.write_u8(f.tag())?;
        }
        for &l in &cache.labels {
            w.write_u32::<LE>(l as u32)?;
        }
        for gd in &cache.diagrams {
            for fd in &gd.per_filtration {
                w.write_f64::<LE>(fd.essential_death)?;
                for dg in &fd.diagrams {
                    w.write_u32::<LE>(dg.points.len() as u32)?;
                    for p in &dg.points {
                        w.write_f64::<LE>(p.birth)?;
                        w.write_f64::<LE>(p.death.unwrap_or(f64::NAN))?;
                    }
                }
            }
        }
        for ranges in &cache.grids.ranges {
            for r in ranges {
                for v in [r.birth_min, r.birth_max, r.pers_min, r.pers_max] {
                    w.write_f64::<LE>(v)?;
                }
            }
        }
        let shape = cache.pi_shape();
        w.write_u8(shape.len() as u8)?;
        for &d in &shape {
            w.write_u32::<LE>(d as u32)?;
        }
        for t in &cache.pi {
            for &v in t.data() {
                w.write_f64::<LE>(v)?;
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_str(r: &mut impl Read, path: &Path) -> Result<String> {
    let n = r.read_u16::<LE>()? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<String> {
    let fmt = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| fmt(e.to_string()))?;
    if &magic != CACHE_MAGIC {
        return Err(fmt("not a feature cache file".into()));
    }
    let version = r.read_u8()?;
    if version != CACHE_VERSION {
        return Err(Error::CacheVersion(format!(
            "{} has cache format {version}, this build reads format {CACHE_VERSION}; rerun `featurize`",
            path.display()
        )));
    }
    read_str(r, path)
}

/// Feature hash stored in a cache file, after checking magic and format version.
pub fn read_cache_hash(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r, path)
}

/// Like [`read_cache_hash`] but `None` when the file does not exist.
pub fn read_cache_hash_opt(path: &Path) -> Result<Option<String>> {
    match File::open(path) {
        Ok(f) => read_header(&mut BufReader::new(f), path).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn read_cache(path: &Path) -> Result<FeatureCache> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingCache(format!("{} not found; run `topoconf featurize` first", path.display()))
        } else {
            e.into()
        }
    })?;
    let mut r = BufReader::new(file);
    let feature_hash = read_header(&mut r, path)?;
    let mut body = || -> Result<FeatureCache> {
        let version = read_str(&mut r, path)?;
        let n = r.read_u32::<LE>()? as usize;
        let k = r.read_u8()? as usize;
        let filtrations = (0..k)
            .map(|_| {
                let t = r.read_u8()?;
                FiltrationKind::from_tag(t).ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    msg: format!("unknown filtration tag {t}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..n)
            .map(|_| Ok(r.read_u32::<LE>()? as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut diagrams = Vec::with_capacity(n);
        for _ in 0..n {
            let mut per_filtration = Vec::with_capacity(k);
            for &kind in &filtrations {
                let essential_death = r.read_f64::<LE>()?;
                let mut dgs = Vec::with_capacity(HOMOLOGY_DIMS);
                for q in 0..HOMOLOGY_DIMS {
                    let m = r.read_u32::<LE>()? as usize;
                    let mut points = Vec::with_capacity(m);
                    for _ in 0..m {
                        let birth = r.read_f64::<LE>()?;
                        let death = r.read_f64::<LE>()?;
                        points.push(if death.is_nan() {
                            PersistencePoint::essential(birth)
                        } else {
                            PersistencePoint::finite(birth, death)
                        });
                    }
                    dgs.push(PersistenceDiagram::new(q as u8, points));
                }
                let [d0, d1]: [PersistenceDiagram; 2] = dgs.try_into().expect("two dims");
                per_filtration.push(FiltrationDiagrams {
                    kind,
                    essential_death,
                    diagrams: [d0, d1],
                });
            }
            diagrams.push(GraphDiagrams { per_filtration });
        }
        let mut ranges = Vec::with_capacity(k);
        for _ in 0..k {
            let mut read_range = || -> Result<GridRange> {
                let v: Vec<f64> = (0..4).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<_>>()?;
                Ok(GridRange::new(v[0], v[1], v[2], v[3]))
            };
            ranges.push([read_range()?, read_range()?]);
        }
        let order = r.read_u8()? as usize;
        let shape = (0..order)
            .map(|_| Ok(r.read_u32::<LE>()? as usize))
            .collect::<Result<Vec<_>>>()?;
        let per: usize = shape.iter().product();
        let mut pi = Vec::with_capacity(n);
        for _ in 0..n {
            let mut data = vec![0.0; per];
            r.read_f64_into::<LE>(&mut data)?;
            pi.push(DenseTensor::new(shape.clone(), data)?);
        }
        Ok(FeatureCache {
            feature_hash: feature_hash.clone(),
            version,
            filtrations,
            labels,
            diagrams,
            grids: PiGrids { ranges },
            pi,
        })
    };
    body().map_err(|e| match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => Error::Format {
            path: path.to_path_buf(),
            msg: "truncated feature cache".into(),
        },
        other => other,
    })
}
