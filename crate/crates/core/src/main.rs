fn main() {
    std::process::exit(trimodal::cli::run());
}
