fn main() {
    std::process::exit(viewfool::cli::main_with(std::env::args_os()));
}
