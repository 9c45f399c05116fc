fn main() -> std::process::ExitCode {
    code_dojo::cli::main()
}
