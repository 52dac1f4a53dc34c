fn main() {
    std::process::exit(dishnet::cli::run(std::env::args_os()));
}
