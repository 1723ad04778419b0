fn main() {
    std::process::exit(fjlab::cli::run(std::env::args_os()));
}
