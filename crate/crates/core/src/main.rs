fn main() {
    std::process::exit(pcref::cli::run(std::env::args_os()));
}
