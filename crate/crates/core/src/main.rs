fn main() {
    std::process::exit(rram_sim::cli::run(std::env::args_os()));
}
