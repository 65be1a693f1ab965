fn main() -> std::process::ExitCode {
    qscf::cli::main()
}
