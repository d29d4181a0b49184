fn main() {
    std::process::exit(switchou::cli::main());
}
