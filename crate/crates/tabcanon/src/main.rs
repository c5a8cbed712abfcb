fn main() {
    std::process::exit(tabcanon::cli::run());
}
