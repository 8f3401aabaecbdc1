fn main() {
    std::process::exit(climemu::cli::run_main());
}
