fn main() {
    std::process::exit(skysmooth::cli::run(std::env::args_os()));
}
