fn main() {
    std::process::exit(verinews::cli::run(std::env::args_os()));
}
