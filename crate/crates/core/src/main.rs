use std::io::Write;

fn main() {
    let outcome = ksat::cli::run(std::env::args_os());
    let mut stdout = std::io::stdout().lock();
    if stdout.write_all(outcome.stdout.as_bytes()).and_then(|_| stdout.flush()).is_err() {
        std::process::exit(ksat::cli::EXIT_FAILURE);
    }
    std::process::exit(outcome.code);
}
