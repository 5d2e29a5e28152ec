fn main() {
    std::process::exit(nlos_loc::cli::main());
}
