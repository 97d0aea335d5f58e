fn main() {
    std::process::exit(prpl::cli::run(std::env::args_os()));
}
