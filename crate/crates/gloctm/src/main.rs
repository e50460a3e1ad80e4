fn main() {
    std::process::exit(gloctm::cli::main_with(std::env::args_os()));
}
