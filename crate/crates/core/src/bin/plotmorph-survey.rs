use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use plotmorph::survey::{render_report, survey, GitHubTransport, OfflineTransport, ReportFormat, ThreadSleeper};

/// Count code-search matches for plotting-function calls.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Comma-separated function names.
    #[arg(long, value_delimiter = ',', required = true)]
    functions: Vec<String>,
    #[arg(long, default_value = "sc.pl")]
    namespace: String,
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    format: ReportFormat,
    #[arg(long, default_value = ".cache")]
    cache_dir: PathBuf,
    /// Query the live API for uncached functions (token from SURVEY_API_TOKEN).
    #[arg(long)]
    live: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let functions: Vec<String> = cli
        .functions
        .iter()
        .map(|f| f.trim().to_string())
        .filter(|f| !f.is_empty())
        .collect();
    let result = if cli.live {
        match GitHubTransport::from_env() {
            Ok(t) => survey(&functions, &cli.namespace, &t, &ThreadSleeper, Some(&cli.cache_dir)),
            Err(e) => Err(e),
        }
    } else {
        survey(&functions, &cli.namespace, &OfflineTransport, &ThreadSleeper, Some(&cli.cache_dir))
    };
    match result {
        Ok(r) => {
            eprintln!(
                "counts are total code-search matches per query; {} of {} from cache",
                r.cache_hits,
                r.rows.len()
            );
            print!("{}", render_report(&r, cli.format));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("plotmorph-survey: {e}");
            ExitCode::FAILURE
        }
    }
}
