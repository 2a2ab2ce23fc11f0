fn main() {
    std::process::exit(lenharm::cli::run(std::env::args_os()));
}
