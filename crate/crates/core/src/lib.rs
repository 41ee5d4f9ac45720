//! Entity-relationship queries over relational data: a safe fragment of the
//! domain relational calculus, frequency statistics measured against
//! query-built reference domains, and an Apriori-style rule miner.
//!
//! ```
//! use errules::Session;
//! use std::path::Path;
//!
//! let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tv");
//! let s = Session::open(&dir.join("schema.json"), &dir, Some(&dir.join("queries.drc"))).unwrap();
//! let q = s.resolve("F1andF2").unwrap();
//! assert_eq!(errules::stats::frequency(s.instance(), &q).unwrap().to_string(), "1/4 = 1/4 (0.250000)");
//! ```

pub mod domain;
pub mod er;
pub mod eval;
pub mod formula;
pub mod miner;
pub mod parser;
pub mod safety;
pub mod schema;
pub mod session;
pub mod stats;
pub mod value;

pub use session::{CheckReport, Session};
/// Re-exported so dependants name the same `Ratio`.
pub use num_rational;

use std::path::PathBuf;

/// Any failure, with the exit-code class the CLI reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema: {0}")]
    Schema(#[from] schema::SchemaError),
    #[error("data: {0}")]
    Instance(#[from] schema::InstanceError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] parser::ParseError),
    #[error(transparent)]
    Er(#[from] er::ErError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Mine(#[from] miner::MineError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// 2 for unreadable or malformed input files and bad invocations, 1 for
    /// queries that fail to parse, check or evaluate.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Instance(_) | Error::Io { .. } | Error::Mine(_) | Error::Usage(_) => 2,
            _ => 1,
        }
    }
}
