use std::panic;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = panic::catch_unwind(|| {
        let stdout = std::io::stdout();
        let stderr = std::io::stderr();
        statemorph::execute(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
    })
    .unwrap_or(4);
    ExitCode::from(code)
}
