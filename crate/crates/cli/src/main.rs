use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = robust_games_cli::run(std::env::args_os(), &mut out);
    let _ = out.flush();
    std::process::exit(code);
}
