fn main() {
    std::process::exit(tilecocycle::cli::main());
}
