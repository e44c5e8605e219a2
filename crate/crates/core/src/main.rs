//! `btdde` command-line entry point.

fn main() {
    std::process::exit(btdde::cli::run_from_args(std::env::args_os()));
}
