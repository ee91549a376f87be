//! Reference bridge server: answers next-token requests on stdin from the
//! n-gram model of a bundle. The failure modes exercise the client.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use tension_core::seqmodel::{serve_request, ModelBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Answer every request.
    Ok,
    /// Exit without answering.
    Exit,
    /// Reply with a line that is not JSON.
    Garbage,
    /// Reply with probabilities summing to more than one.
    Overflow,
    /// Never reply.
    Sleep,
}

#[derive(Debug, Parser)]
#[command(name = "tension-bridge-stub")]
struct Args {
    bundle: PathBuf,
    /// Tokens listed per reply; the rest is reported as one remainder mass.
    /// Defaults to the whole vocabulary.
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Ok)]
    mode: Mode,
    /// Requests answered normally before the failure mode starts.
    #[arg(long, default_value_t = 0)]
    after: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let bundle = match std::fs::read(&args.bundle).map_err(|e| e.to_string()).and_then(|b| ModelBundle::from_bytes(&b).map_err(|e| e.to_string())) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("bridge stub: {e}");
            return ExitCode::from(2);
        }
    };
    let vocab = match bundle.vocabulary() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("bridge stub: {e}");
            return ExitCode::from(2);
        }
    };
    let k = args.topk.unwrap_or(vocab.len());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (n, line) in std::io::stdin().lock().lines().enumerate() {
        let Ok(line) = line else { break };
        let mode = if n < args.after { Mode::Ok } else { args.mode };
        let reply = match mode {
            Mode::Ok => match serve_request(&bundle.model, &vocab, &line, k) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("bridge stub: {e}");
                    return ExitCode::from(1);
                }
            },
            Mode::Exit => return ExitCode::from(1),
            Mode::Garbage => "this is not json".to_string(),
            Mode::Overflow => {
                let id = serde_json::from_str::<serde_json::Value>(&line).ok().and_then(|v| v["id"].as_u64()).unwrap_or(0);
                format!(r#"{{"v":1,"id":{id},"topk":[[0,-0.1],[1,-0.1]],"rest_logprob":null}}"#)
            }
            Mode::Sleep => loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            },
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
