fn main() {
    std::process::exit(gadget::cli::run(std::env::args().collect()));
}
