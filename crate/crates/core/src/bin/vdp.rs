fn main() {
    std::process::exit(lifeserver::cli::vdp_main(std::env::args_os().collect()));
}
