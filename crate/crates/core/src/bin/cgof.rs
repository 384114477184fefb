fn main() {
    std::process::exit(clustered_gof::cli::run(std::env::args_os()));
}
