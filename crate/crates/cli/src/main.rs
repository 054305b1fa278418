use std::io;
use std::process::ExitCode;

use toric_kahler_cli::{emit, parse_config, run, Parsed};

fn main() -> ExitCode {
    let cfg = match parse_config(std::env::args_os()) {
        Ok(Parsed::Run(cfg)) => cfg,
        Ok(Parsed::Exit { status, text }) => {
            print!("{text}");
            return ExitCode::from(status.code() as u8);
        }
        Err(e) => {
            eprint!("{}", e.message);
            if !e.message.ends_with('\n') {
                eprintln!();
            }
            return ExitCode::from(e.status.code() as u8);
        }
    };
    let result = run(&cfg);
    let status = emit(&cfg, &result, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(status.code() as u8)
}
