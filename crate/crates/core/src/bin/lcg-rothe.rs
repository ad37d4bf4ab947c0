fn main() -> std::process::ExitCode {
    lcg_rothe::cli::main()
}
