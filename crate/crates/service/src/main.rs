fn main() {
    std::process::exit(queuelens::cli::main_with_args(std::env::args()));
}
