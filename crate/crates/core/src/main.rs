fn main() {
    std::process::exit(parisian_ruin::cli::run(std::env::args_os()));
}
