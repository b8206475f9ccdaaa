fn main() {
    std::process::exit(forestseg::cli::run(std::env::args_os()));
}
