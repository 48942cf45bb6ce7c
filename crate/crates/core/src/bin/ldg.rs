fn main() {
    std::process::exit(ldg_core::cli::run(std::env::args_os()));
}
