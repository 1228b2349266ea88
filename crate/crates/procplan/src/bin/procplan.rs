fn main() {
    std::process::exit(procplan::cli::run(std::env::args_os()));
}
