fn main() {
    std::process::exit(tempid::cli::run(std::env::args()));
}
