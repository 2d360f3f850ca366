fn main() -> std::process::ExitCode {
    opal_core::cli::main()
}
