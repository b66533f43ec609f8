//! Run configuration: command-line flags layered over an optional
//! `key = value` file layered over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use cordes_fem::adaptivity::{Marking, Method, Refinement};
use cordes_fem::coefficients::{derived_constants, Formulation};
use cordes_fem::experiments::{problem_spec, Experiment};
use cordes_fem::quadrature::QuadratureSettings;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    BfsLs,
    BfsNs,
    ThLs,
    ThNs,
}

impl MethodChoice {
    pub fn method(self) -> Method {
        match self {
            MethodChoice::BfsLs | MethodChoice::BfsNs => Method::Bfs,
            MethodChoice::ThLs | MethodChoice::ThNs => Method::TaylorHood,
        }
    }

    pub fn formulation(self) -> Formulation {
        match self {
            MethodChoice::BfsLs | MethodChoice::ThLs => Formulation::LeastSquares,
            MethodChoice::BfsNs | MethodChoice::ThNs => Formulation::NonSymmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefinementChoice {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarkingChoice {
    Doerfler,
    Maximum,
}

/// Flags of the `run` subcommand. Every field is optional so that a config
/// file can supply it.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Benchmark problem (1, 2 or 3)
    #[arg(long)]
    pub experiment: Option<u8>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    #[arg(long, value_enum)]
    pub refinement: Option<RefinementChoice>,
    /// Bulk parameter of Dörfler marking
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub marking: Option<MarkingChoice>,
    /// Stabilization parameter
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Last solved level has at most this many degrees of freedom
    #[arg(long)]
    pub max_ndof: Option<usize>,
    /// Gauss points per direction on rectangles
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Exactness degree of the triangle rule
    #[arg(long)]
    pub tri_degree: Option<usize>,
    /// Uniform element subdivisions applied before quadrature
    #[arg(long)]
    pub subdivision: Option<u32>,
    /// Start from the criss-cross / cross mesh centred at (0.1, 0.2) (experiment 1 only)
    #[arg(long)]
    pub non_matching: bool,
    /// Optional `key = value` file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV destination; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the final mesh in text form
    #[arg(long)]
    pub dump_mesh: Option<PathBuf>,
    /// Write `<prefix>_convergence.svg` and `<prefix>_mesh.svg`
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub method: MethodChoice,
    pub refinement: Refinement,
    pub theta: f64,
    pub marking: Marking,
    pub lambda: f64,
    pub max_ndof: usize,
    pub quad: QuadratureSettings,
    pub matching: bool,
    pub out: Option<PathBuf>,
    pub dump_mesh: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

pub const DEFAULT_THETA: f64 = 0.3;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_MAX_NDOF: usize = 20_000;

const KEYS: [&str; 14] = [
    "experiment",
    "method",
    "refinement",
    "theta",
    "marking",
    "lambda",
    "max_ndof",
    "quad_order",
    "tri_degree",
    "subdivision",
    "matching",
    "out",
    "dump_mesh",
    "plot",
];

/// Parsed `key = value` file. Blank lines and `#` comments are ignored; keys
/// may use `-` or `_`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key '{}'", n + 1, k.trim())));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Usage(format!("config key '{key}': invalid value '{v}'")))
            })
            .transpose()
    }

    fn get_enum<T: ValueEnum>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.entries
            .get(key)
            .map(|v| T::from_str(v, true).map_err(|_| CliError::Usage(format!("config key '{key}': invalid value '{v}'"))))
            .transpose()
    }
}

impl RunConfig {
    /// Merges flags over `file` over defaults and validates the result.
    pub fn resolve(args: &RunArgs, file: &ConfigFile) -> Result<Self, CliError> {
        let experiment_number = match args.experiment {
            Some(e) => e,
            None => file
                .get::<u8>("experiment")?
                .ok_or_else(|| CliError::Usage("--experiment is required".into()))?,
        };
        let experiment = Experiment::from_number(experiment_number)
            .map_err(|_| CliError::Usage(format!("experiment must be 1, 2 or 3, got {experiment_number}")))?;
        let method = match args.method {
            Some(m) => m,
            None => file
                .get_enum("method")?
                .ok_or_else(|| CliError::Usage("--method is required".into()))?,
        };
        let refinement = match pick(args.refinement, file.get_enum("refinement")?, RefinementChoice::Adaptive) {
            RefinementChoice::Uniform => Refinement::Uniform,
            RefinementChoice::Adaptive => Refinement::Adaptive,
        };
        let marking = match pick(args.marking, file.get_enum("marking")?, MarkingChoice::Doerfler) {
            MarkingChoice::Doerfler => Marking::Doerfler,
            MarkingChoice::Maximum => Marking::Maximum,
        };
        let theta = pick(args.theta, file.get("theta")?, DEFAULT_THETA);
        let lambda = pick(args.lambda, file.get("lambda")?, DEFAULT_LAMBDA);
        let max_ndof = pick(args.max_ndof, file.get("max_ndof")?, DEFAULT_MAX_NDOF);
        let defaults = QuadratureSettings::default();
        let quad = QuadratureSettings {
            rect_points: pick(args.quad_order, file.get("quad_order")?, defaults.rect_points),
            tri_degree: pick(args.tri_degree, file.get("tri_degree")?, defaults.tri_degree),
            subdivision: pick(args.subdivision, file.get("subdivision")?, defaults.subdivision),
        };
        let matching = if args.non_matching {
            false
        } else {
            file.get("matching")?.unwrap_or(true)
        };
        let path = |flag: &Option<PathBuf>, key: &str| -> Result<Option<PathBuf>, CliError> {
            Ok(match flag {
                Some(p) => Some(p.clone()),
                None => file.get::<String>(key)?.map(PathBuf::from),
            })
        };
        let config = RunConfig {
            experiment,
            method,
            refinement,
            theta,
            marking,
            lambda,
            max_ndof,
            quad,
            matching,
            out: path(&args.out, "out")?,
            dump_mesh: path(&args.dump_mesh, "dump_mesh")?,
            plot: path(&args.plot, "plot")?,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(CliError::Usage(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.max_ndof == 0 {
            return Err(CliError::Usage("max-ndof must be positive".into()));
        }
        if !(1..=20).contains(&self.quad.rect_points) {
            return Err(CliError::Usage(format!("quad-order must be in 1..=20, got {}", self.quad.rect_points)));
        }
        if !(1..=10).contains(&self.quad.tri_degree) {
            return Err(CliError::Usage(format!("tri-degree must be in 1..=10, got {}", self.quad.tri_degree)));
        }
        if self.quad.subdivision > 6 {
            return Err(CliError::Usage(format!("subdivision must be at most 6, got {}", self.quad.subdivision)));
        }
        let spec = problem_spec(self.experiment, self.matching).map_err(|e| CliError::Usage(e.to_string()))?;
        derived_constants(&spec.coefficient, self.method.formulation(), self.lambda)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
