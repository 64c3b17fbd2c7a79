fn main() {
    std::process::exit(transit_feedback_cli::run(std::env::args_os(), std::env::vars()));
}
