fn main() {
    std::process::exit(monodromy_cli::run(std::env::args_os()));
}
