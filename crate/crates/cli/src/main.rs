fn main() {
    std::process::exit(slosh_cli::run(std::env::args_os()));
}
