fn main() {
    std::process::exit(chainsig::cli::main_entry());
}
