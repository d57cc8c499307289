fn main() -> std::process::ExitCode {
    flowforge_service::cli::main()
}
