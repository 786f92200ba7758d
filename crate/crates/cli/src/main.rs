fn main() {
    std::process::exit(gaze_align_cli::run(std::env::args_os()));
}
