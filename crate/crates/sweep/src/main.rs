fn main() {
    std::process::exit(sdp_sweep::cli::run(std::env::args_os()));
}
