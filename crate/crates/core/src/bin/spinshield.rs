fn main() {
    std::process::exit(spinshield::cli::run(std::env::args_os()));
}
