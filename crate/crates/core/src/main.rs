fn main() {
    std::process::exit(cox_invariance::cli::run(std::env::args_os()));
}
