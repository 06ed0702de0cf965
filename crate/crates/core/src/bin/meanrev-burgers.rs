fn main() {
    std::process::exit(meanrev_burgers::cli::main_with_args(std::env::args_os()));
}
