fn main() -> std::process::ExitCode {
    bscsynth::cli::main()
}
