fn main() {
    std::process::exit(msrlab::cli::run());
}
