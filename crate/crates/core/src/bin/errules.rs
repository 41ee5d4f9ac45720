use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_rational::Ratio;

use errules::domain::explain_domain;
use errules::eval::{evaluate, evaluate_naive};
use errules::miner::{mine, LanguageBias, MineOptions};
use errules::stats::{confidence, frequency, parse_ratio, support};
use errules::{Error, Session};

/// Evaluate ER queries, compute frequencies over reference domains, and mine
/// ER association rules.
#[derive(Parser)]
#[command(name = "errules", version)]
struct Cli {
    /// Schema document (JSON).
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Directory holding one `<Table>.csv` per table.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// File of `name(vars) := body;` declarations.
    #[arg(long, global = true)]
    queries: Option<PathBuf>,
    /// More logging (repeatable); `RUST_LOG` also works.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the schema and data and report what was found.
    Validate,
    /// Safety, ER status and validity of a query.
    Check { query: String },
    /// Answer tuples as CSV.
    Eval {
        query: String,
        /// Use the brute-force enumerator instead.
        #[arg(long)]
        naive: bool,
    },
    /// Reference domain of the query's head as CSV.
    Domain {
        query: String,
        /// Print the recursion tree with each node's members.
        #[arg(long)]
        explain: bool,
    },
    /// Frequency of a query.
    Freq { query: String },
    /// Support and confidence of `antecedent -> consequent`.
    Rule { antecedent: String, consequent: String },
    /// Level-wise search for frequent queries and rules.
    Mine {
        /// Language bias (JSON).
        #[arg(long)]
        bias: PathBuf,
        #[arg(long, value_parser = ratio, default_value = "1/2")]
        min_support: Ratio<u64>,
        /// Also derive rules at this confidence.
        #[arg(long, value_parser = ratio)]
        min_confidence: Option<Ratio<u64>>,
        #[arg(long)]
        max_level: Option<usize>,
        /// Evaluate every candidate instead of pruning.
        #[arg(long)]
        no_prune: bool,
        /// Write `query,support,confidence` rows here (`-` for stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Interactive session; `help` lists commands.
    Repl,
}

fn ratio(s: &str) -> Result<Ratio<u64>, String> {
    parse_ratio(s).ok_or_else(|| format!("`{}` is not a ratio n/d", s))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn open(cli: &Cli) -> Result<Session, Error> {
    let (Some(schema), Some(data)) = (&cli.schema, &cli.data) else {
        return Err(Error::Usage("--schema and --data are required".into()));
    };
    Session::open(schema, data, cli.queries.as_deref())
}

fn io_err(e: io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8, Error> {
    let mut session = open(cli)?;
    match &cli.command {
        Command::Validate => {
            let inst = session.instance();
            let schema = inst.schema();
            for t in schema.tables() {
                let kind = if t.is_entity_table() { "entity" } else { "relationship" };
                writeln!(out, "{} ({}): {} rows", t.name, kind, inst.relation(&t.name).map_or(0, |r| r.len()))
                    .map_err(io_err)?;
            }
            let fields: Vec<String> = schema.entity_fields().iter().map(|f| f.to_string()).collect();
            writeln!(out, "entity fields: {}", fields.join(", ")).map_err(io_err)?;
            writeln!(
                out,
                "constants: {} ({} entity)",
                inst.active_domain().len(),
                inst.entity_constants().len()
            )
            .map_err(io_err)?;
            if !session.registry().is_empty() {
                writeln!(out, "queries: {}", session.registry().len()).map_err(io_err)?;
            }
            Ok(0)
        }
        Command::Repl => repl(&mut session, out),
        other => command(&session, other, out),
    }
}

/// Commands shared by the command line and the REPL.
fn command(session: &Session, cmd: &Command, out: &mut dyn Write) -> Result<u8, Error> {
    let inst = session.instance();
    match cmd {
        Command::Check { query } => {
            let report = session.check(&session.resolve(query)?);
            write!(out, "{}", report).map_err(io_err)?;
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Eval { query, naive } => {
            let q = session.resolve(query)?;
            let r = if *naive { evaluate_naive(inst, &q) } else { evaluate(inst, &q)? };
            write!(out, "{}", r.to_csv()).map_err(io_err)?;
            Ok(0)
        }
        Command::Domain { query, explain } => {
            let q = session.resolve(query)?;
            let (dom, tree) = explain_domain(inst, &q.body, &q.head);
            if *explain {
                writeln!(out, "{}", tree).map_err(io_err)?;
            }
            write!(out, "{}", dom.to_csv()).map_err(io_err)?;
            Ok(0)
        }
        Command::Freq { query } => {
            let f = frequency(inst, &session.resolve(query)?)?;
            writeln!(out, "{}", f).map_err(io_err)?;
            Ok(0)
        }
        Command::Rule { antecedent, consequent } => {
            let rule = session.rule(antecedent, consequent)?;
            let s = support(inst, &rule)?;
            let c = confidence(inst, &rule)?;
            writeln!(out, "rule: {}", rule).map_err(io_err)?;
            writeln!(out, "support: {}", s).map_err(io_err)?;
            writeln!(out, "confidence: {}", c).map_err(io_err)?;
            Ok(0)
        }
        Command::Mine {
            bias,
            min_support,
            min_confidence,
            max_level,
            no_prune,
            csv,
        } => {
            let text = std::fs::read_to_string(bias).map_err(|source| Error::Io {
                path: bias.clone(),
                source,
            })?;
            let bias = LanguageBias::from_json(&text, inst.schema())?;
            let opts = MineOptions {
                min_support: *min_support,
                max_level: *max_level,
                no_prune: *no_prune,
            };
            let result = mine(inst, &bias, &opts, *min_confidence);
            write!(out, "{}", result.report()).map_err(io_err)?;
            match csv.as_deref() {
                None => {}
                Some(p) if p == Path::new("-") => write!(out, "\n{}", result.to_csv()).map_err(io_err)?,
                Some(p) => std::fs::write(p, result.to_csv()).map_err(|source| Error::Io {
                    path: p.to_path_buf(),
                    source,
                })?,
            }
            Ok(0)
        }
        Command::Validate | Command::Repl => unreachable!("handled by run"),
    }
}

const REPL_HELP: &str = "\
commands:
  let NAME = BODY            register BODY under NAME (head: free variables)
  NAME(VARS) := BODY;        declarations, as in a query file
  check Q | eval Q | domain Q | explain Q | freq Q
  rule A -> C                support and confidence
  list                       registered queries
  help | quit
Q is a registered name, a declaration, or a bare formula.
";

fn repl(session: &mut Session, out: &mut dyn Write) -> Result<u8, Error> {
    let stdin = io::stdin();
    let interactive = stdin.is_terminal();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            write!(out, "> ").map_err(io_err)?;
            out.flush().map_err(io_err)?;
        }
        let Some(line) = lines.next() else { return Ok(0) };
        let line = line.map_err(|source| Error::Io {
            path: PathBuf::from("<stdin>"),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if matches!(line, "quit" | "exit") {
            return Ok(0);
        }
        if let Err(e) = repl_line(session, line, out) {
            writeln!(out, "error: {}", e).map_err(io_err)?;
        }
    }
}

fn repl_line(session: &mut Session, line: &str, out: &mut dyn Write) -> Result<(), Error> {
    let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let rest = rest.trim().to_string();
    let cmd = match word {
        "help" => {
            write!(out, "{}", REPL_HELP).map_err(io_err)?;
            return Ok(());
        }
        "list" => {
            for q in session.registry().iter() {
                writeln!(out, "{}", q).map_err(io_err)?;
            }
            return Ok(());
        }
        "let" => {
            let (name, body) = rest
                .split_once('=')
                .ok_or_else(|| Error::Usage("expected `let NAME = BODY`".into()))?;
            let q = session.bind(name.trim(), body.trim())?;
            writeln!(out, "{}", q).map_err(io_err)?;
            return Ok(());
        }
        "check" => Command::Check { query: rest },
        "eval" => Command::Eval { query: rest, naive: false },
        "domain" => Command::Domain { query: rest, explain: false },
        "explain" => Command::Domain { query: rest, explain: true },
        "freq" => Command::Freq { query: rest },
        "rule" => {
            let (a, c) = rest
                .split_once("->")
                .ok_or_else(|| Error::Usage("expected `rule A -> C`".into()))?;
            Command::Rule {
                antecedent: a.trim().to_string(),
                consequent: c.trim().to_string(),
            }
        }
        _ if line.contains(":=") => {
            for name in session.define(line)? {
                writeln!(out, "defined {}", name).map_err(io_err)?;
            }
            return Ok(());
        }
        _ => return Err(Error::Usage(format!("unknown command `{}`; try `help`", word))),
    };
    command(session, &cmd, out).map(|_| ())
}
