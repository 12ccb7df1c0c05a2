fn main() {
    std::process::exit(modality_debias::cli::run(std::env::args_os()));
}
