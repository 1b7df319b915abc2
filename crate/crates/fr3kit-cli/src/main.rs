fn main() {
    std::process::exit(fr3kit_cli::run(std::env::args_os()));
}
