fn main() {
    std::process::exit(dsi::cli::main_with_args(std::env::args_os()));
}
