fn main() {
    std::process::exit(loadprompt::cli::main());
}
