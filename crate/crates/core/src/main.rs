fn main() {
    std::process::exit(tsnmf::cli::run(std::env::args_os()));
}
