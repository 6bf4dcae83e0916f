use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = oosr2::cli::run(std::env::args_os(), &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = oosr2::cli::exit_code(&e);
            match e.downcast_ref::<clap::Error>() {
                Some(ce) => {
                    let _ = ce.print();
                }
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(code as u8)
        }
    }
}
