fn main() {
    std::process::exit(tonefair_cli::dispatch(std::env::args_os()));
}
