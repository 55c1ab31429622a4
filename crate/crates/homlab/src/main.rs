fn main() {
    std::process::exit(homlab::cli::run());
}
