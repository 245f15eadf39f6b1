fn main() {
    std::process::exit(hyperctrl::cli::run(std::env::args_os()));
}
