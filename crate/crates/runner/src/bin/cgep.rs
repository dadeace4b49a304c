fn main() -> std::process::ExitCode {
    cgep_runner::cli::main()
}
