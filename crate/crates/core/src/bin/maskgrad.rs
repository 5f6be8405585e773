fn main() {
    env_logger::init();
    std::process::exit(maskgrad::cli::run(std::env::args_os()));
}
