fn main() -> std::process::ExitCode {
    wristpipe::cli::main()
}
