//! Run configuration: sectioned `key = value` text.
//!
//! ```text
//! # comment
//! [mesh]
//! extents = 2000 2000 1000
//! divisions = 10 10 10
//! ```
//!
//! Unknown sections and keys are rejected. Relative paths are taken relative
//! to the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crustfem::elasticity::{read_materials, Material};
use crustfem::fault::{read_fault_file, FaultDefinition, SlipDirection};
use crustfem::mesh::{BoxMeshSpec, FixedBoundary};
use crustfem::solver::SolverConfig;
use crustfem::Precision;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax { path: String, line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Value { section: String, key: String, msg: String },
    #[error("{0}")]
    Missing(String),
}

const KEYS: &[(&str, &[&str])] = &[
    ("mesh", &["extents", "divisions", "layers", "boundary", "file", "dirichlet"]),
    ("materials", &["file", "material"]),
    (
        "solver",
        &[
            "outer_tol",
            "outer_max_iter",
            "level0_tol",
            "level0_max_iter",
            "level1_tol",
            "level1_max_iter",
            "level2_tol",
            "level2_max_iter",
            "inner_precision",
            "batch_size",
            "history_stride",
            "aggregate_size",
        ],
    ),
    ("solve", &["rhs", "columns", "rhs_file", "vtk"]),
    (
        "fault",
        &["file", "strike", "dip", "rectangle", "centers", "radius", "directions"],
    ),
    ("greens", &["output"]),
    ("observations", &["file", "surface_grid"]),
    (
        "inversion",
        &[
            "greens",
            "data",
            "synthetic_noise",
            "alphas",
            "alpha_min",
            "alpha_max",
            "alpha_count",
            "neighbor_distance",
        ],
    ),
];

/// Keys that may appear more than once, in order.
const REPEATABLE: &[(&str, &str)] = &[("materials", "material")];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but uninterpreted config file.
#[derive(Debug, Clone, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, Vec<Entry>>>,
    base: PathBuf,
}

impl Ini {
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self, ConfigError> {
        let syntax = |line: usize, msg: String| ConfigError::Syntax {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut ini = Ini {
            sections: BTreeMap::new(),
            base: base.to_path_buf(),
        };
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split(['#', ';']).next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(line, format!("unterminated section header '{body}'")))?
                    .trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(syntax(line, format!("unknown section [{name}]")));
                }
                if ini.sections.contains_key(name) {
                    return Err(syntax(line, format!("section [{name}] appears twice")));
                }
                ini.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| syntax(line, format!("expected 'key = value', found '{body}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let section = current
                .as_deref()
                .ok_or_else(|| syntax(line, format!("'{key}' appears before any section")))?;
            let allowed = KEYS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(syntax(line, format!("unknown key '{key}' in [{section}]")));
            }
            if value.is_empty() {
                return Err(syntax(line, format!("'{key}' has no value")));
            }
            let entries = ini
                .sections
                .get_mut(section)
                .expect("section inserted on header")
                .entry(key.to_string())
                .or_default();
            if !entries.is_empty() && !REPEATABLE.contains(&(section, key)) {
                return Err(syntax(line, format!("'{key}' given twice in [{section}]")));
            }
            entries.push(Entry {
                value: value.to_string(),
                line,
            });
        }
        Ok(ini)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Syntax {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), &base)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.get(key)?.first()
    }

    fn all(&self, section: &str, key: &str) -> &[Entry] {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn bad(section: &str, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: section.into(),
            key: key.into(),
            msg: msg.into(),
        }
    }

    fn parse_as<T: std::str::FromStr>(section: &str, key: &str, e: &Entry) -> Result<T, ConfigError> {
        e.value
            .parse()
            .map_err(|_| Self::bad(section, key, format!("cannot parse '{}' (line {})", e.value, e.line)))
    }

    pub fn value<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(section, key).map(|e| Self::parse_as(section, key, e)).transpose()
    }

    pub fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        e.value
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Self::bad(section, key, format!("cannot parse '{t}' (line {})", e.line)))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn fixed<const N: usize>(&self, section: &str, key: &str) -> Result<Option<[f64; N]>, ConfigError> {
        match self.list::<f64>(section, key)? {
            None => Ok(None),
            Some(v) if v.len() == N => Ok(Some(std::array::from_fn(|i| v[i]))),
            Some(v) => Err(Self::bad(section, key, format!("expected {N} numbers, found {}", v.len()))),
        }
    }

    /// Path relative to the config file; must exist unless `may_be_missing`.
    pub fn path(&self, section: &str, key: &str, may_be_missing: bool) -> Result<Option<PathBuf>, ConfigError> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        let p = self.base.join(&e.value);
        if !may_be_missing && !p.is_file() {
            return Err(Self::bad(section, key, format!("file '{}' not found", p.display())));
        }
        Ok(Some(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Box(BoxMeshSpec),
    File { mesh: PathBuf, dirichlet: Option<PathBuf> },
}

impl Default for MeshSource {
    fn default() -> Self {
        MeshSource::Box(BoxMeshSpec::new([1.0; 3], [2, 2, 2]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsKind {
    /// Smooth displacement field `u*`; forces are `K u*`.
    Manufactured,
    /// Seeded uniform random nodal forces.
    Random,
    /// Forces read from a solution-format file.
    File,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSection {
    pub rhs: RhsKind,
    pub columns: usize,
    pub rhs_file: Option<PathBuf>,
    pub vtk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultSection {
    pub definition: FaultDefinition,
    /// Basis centers along strike and down dip.
    pub centers: [usize; 2],
    pub radius: f64,
    pub directions: Vec<SlipDirection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSource {
    File(PathBuf),
    /// `nx × ny` cell-centered points on the top surface, three components each.
    SurfaceGrid(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaGrid {
    List(Vec<f64>),
    /// Log grid; bounds default to `1e-6..1` times `‖G‖_F / ‖L‖_F`.
    Log { min: Option<f64>, max: Option<f64>, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    /// `d = G a* + noise`, uniform in `[-σ, σ]` from the run seed.
    Synthetic { noise: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionSection {
    pub greens: Option<PathBuf>,
    pub data: DataSource,
    pub alphas: AlphaGrid,
    pub neighbor_distance: Option<f64>,
}

/// Everything a command may need. Sections a command does not use are still
/// parsed, so a typo anywhere fails early.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    /// `None` when the config gives no `[materials]` section.
    pub materials: Option<Vec<Material>>,
    pub solver: SolverConfig,
    pub aggregate_size: usize,
    pub solve: SolveSection,
    pub fault: Option<FaultSection>,
    pub observations: Option<ObservationSource>,
    pub greens_output: Option<PathBuf>,
    pub inversion: InversionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSource::default(),
            materials: None,
            solver: SolverConfig::default(),
            aggregate_size: 8,
            solve: SolveSection {
                rhs: RhsKind::Manufactured,
                columns: 1,
                rhs_file: None,
                vtk: false,
            },
            fault: None,
            observations: None,
            greens_output: None,
            inversion: InversionSection {
                greens: None,
                data: DataSource::Synthetic { noise: 0.0 },
                alphas: AlphaGrid::Log {
                    min: None,
                    max: None,
                    count: 25,
                },
                neighbor_distance: None,
            },
        }
    }
}

fn positive(section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Ini::bad(section, key, format!("must be positive, got {v}")))
    }
}

fn at_least_one(section: &str, key: &str, v: usize) -> Result<usize, ConfigError> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Ini::bad(section, key, "must be at least 1"))
    }
}

impl RunConfig {
    pub fn from_ini(ini: &Ini) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig {
            mesh: mesh_source(ini)?,
            materials: materials(ini)?,
            ..RunConfig::default()
        };
        solver_section(ini, &mut cfg)?;

        if let Some(r) = ini.value::<String>("solve", "rhs")? {
            cfg.solve.rhs = match r.as_str() {
                "manufactured" => RhsKind::Manufactured,
                "random" => RhsKind::Random,
                "file" => RhsKind::File,
                _ => return Err(Ini::bad("solve", "rhs", format!("expected manufactured, random or file, got '{r}'"))),
            };
        }
        if let Some(c) = ini.value("solve", "columns")? {
            cfg.solve.columns = at_least_one("solve", "columns", c)?;
        }
        cfg.solve.rhs_file = ini.path("solve", "rhs_file", false)?;
        if cfg.solve.rhs == RhsKind::File && cfg.solve.rhs_file.is_none() {
            return Err(Ini::bad("solve", "rhs_file", "required when rhs = file"));
        }
        if let Some(v) = ini.value::<bool>("solve", "vtk")? {
            cfg.solve.vtk = v;
        }

        cfg.fault = fault_section(ini)?;
        cfg.observations = match (ini.path("observations", "file", false)?, ini.list::<usize>("observations", "surface_grid")?) {
            (Some(_), Some(_)) => {
                return Err(Ini::bad("observations", "surface_grid", "give either file or surface_grid"));
            }
            (Some(p), None) => Some(ObservationSource::File(p)),
            (None, Some(g)) => {
                if g.len() != 2 || g.contains(&0) {
                    return Err(Ini::bad("observations", "surface_grid", "expected two positive counts"));
                }
                Some(ObservationSource::SurfaceGrid(g[0], g[1]))
            }
            (None, None) => None,
        };
        cfg.greens_output = ini.path("greens", "output", true)?;
        inversion_section(ini, &mut cfg.inversion)?;
        Ok(cfg)
    }
}

fn mesh_source(ini: &Ini) -> Result<MeshSource, ConfigError> {
    const S: &str = "mesh";
    if let Some(mesh) = ini.path(S, "file", false)? {
        for k in ["extents", "divisions", "layers", "boundary"] {
            if ini.get(S, k).is_some() {
                return Err(Ini::bad(S, k, "not allowed together with file"));
            }
        }
        return Ok(MeshSource::File {
            mesh,
            dirichlet: ini.path(S, "dirichlet", false)?,
        });
    }
    if ini.get(S, "dirichlet").is_some() {
        return Err(Ini::bad(S, "dirichlet", "only allowed together with file"));
    }
    let MeshSource::Box(mut spec) = MeshSource::default() else {
        unreachable!()
    };
    if let Some(e) = ini.fixed::<3>(S, "extents")? {
        spec.extents = e;
    }
    if let Some(d) = ini.list::<usize>(S, "divisions")? {
        if d.len() != 3 {
            return Err(Ini::bad(S, "divisions", format!("expected 3 counts, found {}", d.len())));
        }
        spec.divisions = [d[0], d[1], d[2]];
    }
    if let Some(l) = ini.list::<f64>(S, "layers")? {
        spec.layer_interfaces = l;
    }
    if let Some(b) = ini.value::<String>(S, "boundary")? {
        spec.fixed_boundary = match b.as_str() {
            "rollers" => FixedBoundary::BottomAndSideRollers,
            "bottom" => FixedBoundary::BottomOnly,
            "none" => FixedBoundary::None,
            _ => return Err(Ini::bad(S, "boundary", format!("expected rollers, bottom or none, got '{b}'"))),
        };
    }
    spec.validate().map_err(|e| Ini::bad(S, "extents", e.to_string()))?;
    Ok(MeshSource::Box(spec))
}

fn materials(ini: &Ini) -> Result<Option<Vec<Material>>, ConfigError> {
    const S: &str = "materials";
    if !ini.has_section(S) {
        return Ok(None);
    }
    let inline = ini.all(S, "material");
    let mats = match (ini.path(S, "file", false)?, inline.is_empty()) {
        (Some(_), false) => return Err(Ini::bad(S, "material", "give either file or material lines")),
        (Some(p), true) => read_materials(&p).map_err(|e| Ini::bad(S, "file", e.to_string()))?,
        (None, false) => inline
            .iter()
            .map(|e| {
                let v: Vec<f64> = e
                    .value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| Ini::bad(S, "material", format!("line {}: expected 'vp vs rho'", e.line)))?;
                if v.len() != 3 {
                    return Err(Ini::bad(S, "material", format!("line {}: expected 'vp vs rho'", e.line)));
                }
                Material::from_wavespeeds(v[0], v[1], v[2])
                    .map_err(|err| Ini::bad(S, "material", format!("line {}: {err}", e.line)))
            })
            .collect::<Result<Vec<_>, _>>()?,
        (None, true) => return Err(Ini::bad(S, "material", "section is empty")),
    };
    Ok(Some(mats))
}

fn solver_section(ini: &Ini, cfg: &mut RunConfig) -> Result<(), ConfigError> {
    const S: &str = "solver";
    let s = &mut cfg.solver;
    if let Some(v) = ini.value(S, "outer_tol")? {
        s.outer_tol = v;
    }
    if let Some(v) = ini.value(S, "outer_max_iter")? {
        s.outer_max_iter = v;
    }
    for (i, lvl) in s.levels.iter_mut().enumerate() {
        if let Some(v) = ini.value(S, &format!("level{i}_tol"))? {
            lvl.tol = v;
        }
        if let Some(v) = ini.value(S, &format!("level{i}_max_iter"))? {
            lvl.max_iter = v;
        }
    }
    if let Some(p) = ini.value::<String>(S, "inner_precision")? {
        s.inner_precision = match p.as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            _ => return Err(Ini::bad(S, "inner_precision", format!("expected f32 or f64, got '{p}'"))),
        };
    }
    if let Some(v) = ini.value(S, "batch_size")? {
        s.batch_size = v;
    }
    if let Some(v) = ini.value(S, "history_stride")? {
        s.history_stride = v;
    }
    s.validate().map_err(|e| Ini::bad(S, "-", e.to_string()))?;
    if let Some(v) = ini.value::<usize>(S, "aggregate_size")? {
        if v < 2 {
            return Err(Ini::bad(S, "aggregate_size", "must be at least 2"));
        }
        cfg.aggregate_size = v;
    }
    Ok(())
}

fn fault_section(ini: &Ini) -> Result<Option<FaultSection>, ConfigError> {
    const S: &str = "fault";
    if !ini.has_section(S) {
        return Ok(None);
    }
    let definition = if let Some(p) = ini.path(S, "file", false)? {
        for k in ["strike", "dip", "rectangle"] {
            if ini.get(S, k).is_some() {
                return Err(Ini::bad(S, k, "not allowed together with file"));
            }
        }
        read_fault_file(&p).map_err(|e| Ini::bad(S, "file", e.to_string()))?
    } else {
        let need = |k: &str| ConfigError::Missing(format!("[{S}] needs '{k}' when no file is given"));
        let r = ini.fixed::<5>(S, "rectangle")?.ok_or_else(|| need("rectangle"))?;
        FaultDefinition {
            strike_deg: ini.value(S, "strike")?.ok_or_else(|| need("strike"))?,
            dip_deg: ini.value(S, "dip")?.ok_or_else(|| need("dip"))?,
            triangles: Vec::new(),
            rectangle: Some(([r[0], r[1], r[2]], r[3], r[4])),
        }
    };
    let centers = match ini.list::<usize>(S, "centers")? {
        None => [3, 3],
        Some(c) if c.len() == 2 && !c.contains(&0) => [c[0], c[1]],
        Some(_) => return Err(Ini::bad(S, "centers", "expected two positive counts")),
    };
    let radius = match ini.value(S, "radius")? {
        Some(r) => positive(S, "radius", r)?,
        None => {
            let (_, l, w) = definition
                .rectangle
                .ok_or_else(|| ConfigError::Missing(format!("[{S}] needs 'radius' when the fault has no rectangle")))?;
            (l / (centers[0] + 1) as f64).max(w / (centers[1] + 1) as f64) * 1.5
        }
    };
    let directions = match ini.list::<String>(S, "directions")? {
        None => vec![SlipDirection::Strike, SlipDirection::Dip],
        Some(d) => d
            .iter()
            .map(|s| SlipDirection::parse(s).ok_or_else(|| Ini::bad(S, "directions", format!("unknown direction '{s}'"))))
            .collect::<Result<Vec<_>, _>>()?,
    };
    if directions.is_empty() {
        return Err(Ini::bad(S, "directions", "at least one direction needed"));
    }
    Ok(Some(FaultSection {
        definition,
        centers,
        radius,
        directions,
    }))
}

fn inversion_section(ini: &Ini, inv: &mut InversionSection) -> Result<(), ConfigError> {
    const S: &str = "inversion";
    inv.greens = ini.path(S, "greens", true)?;
    inv.data = match (ini.path(S, "data", false)?, ini.value::<f64>(S, "synthetic_noise")?) {
        (Some(_), Some(_)) => return Err(Ini::bad(S, "synthetic_noise", "give either data or synthetic_noise")),
        (Some(p), None) => DataSource::File(p),
        (None, Some(n)) if n >= 0.0 && n.is_finite() => DataSource::Synthetic { noise: n },
        (None, Some(n)) => return Err(Ini::bad(S, "synthetic_noise", format!("must be non-negative, got {n}"))),
        (None, None) => DataSource::Synthetic { noise: 0.0 },
    };
    if let Some(list) = ini.list::<f64>(S, "alphas")? {
        for k in ["alpha_min", "alpha_max", "alpha_count"] {
            if ini.get(S, k).is_some() {
                return Err(Ini::bad(S, k, "not allowed together with alphas"));
            }
        }
        inv.alphas = AlphaGrid::List(list);
    } else {
        let min = ini.value::<f64>(S, "alpha_min")?.map(|v| positive(S, "alpha_min", v)).transpose()?;
        let max = ini.value::<f64>(S, "alpha_max")?.map(|v| positive(S, "alpha_max", v)).transpose()?;
        if let (Some(a), Some(b)) = (min, max) {
            if b <= a {
                return Err(Ini::bad(S, "alpha_max", "must exceed alpha_min"));
            }
        }
        let count = ini.value(S, "alpha_count")?.unwrap_or(25);
        inv.alphas = AlphaGrid::Log { min, max, count };
    }
    if let Some(v) = ini.value(S, "neighbor_distance")? {
        inv.neighbor_distance = Some(positive(S, "neighbor_distance", v)?);
    }
    Ok(())
}
