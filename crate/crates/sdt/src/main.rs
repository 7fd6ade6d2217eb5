use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let res = sdt::cli::run(std::env::args_os(), &mut out);
    let _ = out.flush();
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}/{}", e.category(), e);
            ExitCode::from(sdt::cli::exit_code(&e) as u8)
        }
    }
}
