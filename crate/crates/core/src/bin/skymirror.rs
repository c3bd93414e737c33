fn main() {
    std::process::exit(skymirror::app::cli::run(std::env::args_os()));
}
