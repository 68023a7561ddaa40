fn main() -> std::process::ExitCode {
    scenelift_cli::run(std::env::args_os())
}
