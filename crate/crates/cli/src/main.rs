fn main() -> std::process::ExitCode {
    sentinel_cli::commands::main()
}
