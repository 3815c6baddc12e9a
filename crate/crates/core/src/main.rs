fn main() {
    std::process::exit(quasispecies::cli::run(std::env::args_os()));
}
