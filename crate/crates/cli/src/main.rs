fn main() {
    std::process::exit(fop_cli::main_with(std::env::args_os()));
}
