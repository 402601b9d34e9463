fn main() {
    std::process::exit(neurocore_cli::run(std::env::args_os()));
}
