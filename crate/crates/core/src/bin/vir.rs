fn main() {
    std::process::exit(vir::cli::run(std::env::args_os()));
}
