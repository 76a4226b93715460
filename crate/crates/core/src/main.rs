fn main() -> std::process::ExitCode {
    sdcd::cli::main()
}
