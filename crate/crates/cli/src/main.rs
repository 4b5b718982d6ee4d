fn main() {
    std::process::exit(newsflow_cli::run(std::env::args_os()));
}
