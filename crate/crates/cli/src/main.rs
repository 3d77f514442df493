fn main() {
    std::process::exit(vidstyle_cli::run(std::env::args_os()));
}
