//! Command-line front end for the multi-input multiplication toolkit:
//! parameter generation, key management, encryption, plan-driven
//! multiplication, partition planning, hardware cost reports, end-to-end
//! verification, and checked reproduction of the reference complexity
//! tables.

mod bench;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mimult::cost::Mult3Variant;
use mimult::mult::RelinMode;

/// A command failure carrying its exit code: 2 bad parameters or input
/// files, 3 plan or depth problems, 4 missing or unusable key material,
/// 5 verification mismatch.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Failure {
        Failure { code, message: message.into() }
    }

    /// Tags an error raised while reading key material with the key exit
    /// code (a corrupt or absent key file is a key problem, not a generic
    /// parameter one).
    pub fn keys(err: mimult::Error) -> Failure {
        Failure::new(4, err.to_string())
    }
}

impl From<mimult::Error> for Failure {
    fn from(err: mimult::Error) -> Failure {
        use mimult::Error::*;
        let code = match err {
            PlanParse(_)
            | RefinementMismatch(_)
            | PlanArityMismatch { .. }
            | DepthBudgetExceeded { .. }
            | SearchSpaceExhausted => 3,
            MissingEvalKey(_) => 4,
            _ => 2,
        };
        Failure::new(code, err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Failure {
        Failure::new(2, err.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "mimult",
    version,
    about = "Multi-input RNS-CKKS ciphertext multiplication toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a parameter context (prime chains and derived tables)
    Params(ParamsArgs),
    /// Generate secret, public, and generalized evaluation keys
    Keygen(KeygenArgs),
    /// Encrypt an integer-coefficient message
    Encrypt(EncryptArgs),
    /// Decrypt a ciphertext and recover the rounded message
    Decrypt(DecryptArgs),
    /// Multiply ciphertexts under a partition plan
    Multiply(MultiplyArgs),
    /// Search for the cheapest partition plan for n inputs
    Plan(PlanArgs),
    /// Hardware cost report for a multiplier configuration
    Cost(CostArgs),
    /// End-to-end homomorphism trials against exact products
    Verify(VerifyArgs),
    /// Reproduce the reference complexity tables, optionally checked
    Bench(BenchArgs),
}

#[derive(Args)]
pub struct ParamsArgs {
    /// Ring degree (power of two)
    #[arg(long = "N", default_value_t = 1024)]
    pub ring_degree: usize,
    /// Number of scaling moduli q_0…q_{L−1}
    #[arg(long = "L", default_value_t = 8)]
    pub l: usize,
    /// Number of auxiliary moduli p_0…p_{K−1} (K ≥ L)
    #[arg(long = "K", default_value_t = 8)]
    pub k: usize,
    /// Bit-width cap of the scaling primes
    #[arg(long, default_value_t = 50)]
    pub wq: u32,
    /// Bit width of the auxiliary primes
    #[arg(long, default_value_t = 50)]
    pub wp: u32,
    /// Scale exponent: messages are encoded at 2^delta
    #[arg(long, default_value_t = 45)]
    pub delta: u32,
    /// Gaussian noise parameter
    #[arg(long, default_value_t = 3.2)]
    pub sigma: f64,
    /// Hamming weight of the ternary secret
    #[arg(long, default_value_t = 64)]
    pub h: usize,
    /// Seed recorded in the context (key and noise streams derive from it)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Context file to write
    #[arg(long, default_value = "ctx.json")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct KeygenArgs {
    /// Context file
    #[arg(long)]
    pub ctx: PathBuf,
    /// Highest secret power covered by the evaluation keys (an n-input
    /// plan is relinearized once at the root and needs powers up to n)
    #[arg(long = "max-t", default_value_t = 3)]
    pub max_t: usize,
    /// Key-stream seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for sk.bin, pk.bin, and ek.bin
    #[arg(long, default_value = "keys")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EncryptArgs {
    /// Context file
    #[arg(long)]
    pub ctx: PathBuf,
    /// Key directory (uses pk.bin)
    #[arg(long)]
    pub keys: PathBuf,
    /// Comma-separated integer coefficients, zero-padded to the ring degree
    #[arg(long, allow_hyphen_values = true)]
    pub message: String,
    /// Encryption-noise seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ciphertext file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DecryptArgs {
    /// Context file
    #[arg(long)]
    pub ctx: PathBuf,
    /// Key directory (uses sk.bin)
    #[arg(long)]
    pub keys: PathBuf,
    /// Ciphertext file to read
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Maximum number of nonzero coefficients to print
    #[arg(long, default_value_t = 16)]
    pub limit: usize,
}

#[derive(Args)]
pub struct MultiplyArgs {
    /// Context file
    #[arg(long)]
    pub ctx: PathBuf,
    /// Key directory (uses ek.bin)
    #[arg(long)]
    pub keys: PathBuf,
    /// Partition plan, e.g. "(3,3)" or "(4,3)|(2,2)"; the cheapest plan
    /// for the input count when omitted
    #[arg(long)]
    pub plan: Option<String>,
    /// Input ciphertext files, one per plan leaf
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Result ciphertext file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Write the instrumented per-stage operation counters as JSON
    #[arg(long)]
    pub counters: Option<PathBuf>,
    /// Relinearization mode
    #[arg(long, value_enum, default_value = "fused")]
    pub mode: Mode,
    /// Depth budget in levels (default: the binary-tree depth ⌈log₂ n⌉)
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Args)]
pub struct PlanArgs {
    /// Number of inputs
    #[arg(long)]
    pub n: usize,
    /// Depth budget in levels (default: the binary-tree depth ⌈log₂ n⌉)
    #[arg(long)]
    pub depth: Option<usize>,
    /// Report the conventional binary tree instead of searching
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Args)]
pub struct CostArgs {
    /// Number of inputs (only 3 admits --variant)
    #[arg(long)]
    pub n: Option<usize>,
    /// Three-input pipeline variant (closed-form stage table)
    #[arg(long, value_enum, conflicts_with = "plan")]
    pub variant: Option<Variant>,
    /// Partition plan to cost; the cheapest plan for --n when omitted
    #[arg(long)]
    pub plan: Option<String>,
    /// Active scaling moduli
    #[arg(long = "L", default_value_t = 24)]
    pub l: usize,
    /// Auxiliary moduli
    #[arg(long = "K", default_value_t = 24)]
    pub k: usize,
    /// Ring degree (power of two)
    #[arg(long = "N", default_value_t = 65_536)]
    pub ring_degree: usize,
    /// Datapath word width in bits
    #[arg(long, default_value_t = 64)]
    pub w: u64,
    /// Output format
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Context file
    #[arg(long)]
    pub ctx: PathBuf,
    /// Key directory (uses sk.bin, pk.bin, and ek.bin)
    #[arg(long)]
    pub keys: PathBuf,
    /// Number of inputs (defaults to the plan's leaf count)
    #[arg(long)]
    pub n: Option<usize>,
    /// Partition plan; the cheapest plan for --n when omitted
    #[arg(long)]
    pub plan: Option<String>,
    /// Number of random trials
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Message and encryption seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relinearization mode
    #[arg(long, value_enum, default_value = "improved")]
    pub mode: Mode,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Which tables to reproduce
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Exit nonzero if any reproduced cell deviates
    #[arg(long)]
    pub check: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Classic,
    Fused,
    Improved,
}

impl From<Mode> for RelinMode {
    fn from(m: Mode) -> RelinMode {
        match m {
            Mode::Classic => RelinMode::Classic,
            Mode::Fused => RelinMode::Fused,
            Mode::Improved => RelinMode::Improved,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Prior,
    Improved,
}

impl From<Variant> for Mult3Variant {
    fn from(v: Variant) -> Mult3Variant {
        match v {
            Variant::Prior => Mult3Variant::Prior,
            Variant::Improved => Mult3Variant::Improved,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Partition table: rescaling units for 3–12 inputs, plus 17
    #[value(name = "tableII", alias = "tableii")]
    TableII,
    /// Three-input pipeline, rescaling, and memory tables
    #[value(name = "tableV", alias = "tablev")]
    TableV,
    /// Every table plus the end-to-end functional checks
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Params(a) => commands::params(a),
        Command::Keygen(a) => commands::keygen(a),
        Command::Encrypt(a) => commands::encrypt(a),
        Command::Decrypt(a) => commands::decrypt(a),
        Command::Multiply(a) => commands::multiply(a),
        Command::Plan(a) => commands::plan(a),
        Command::Cost(a) => commands::cost(a),
        Command::Verify(a) => commands::verify(a),
        Command::Bench(a) => bench::run(a.suite, a.check),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
