fn main() -> std::process::ExitCode {
    softseg::cli::main()
}
