fn main() {
    std::process::exit(mspt::cli::run(std::env::args_os()));
}
