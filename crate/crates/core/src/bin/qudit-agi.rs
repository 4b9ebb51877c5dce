fn main() {
    std::process::exit(qudit_agi::cli::run(std::env::args_os()));
}
