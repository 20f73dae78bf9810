fn main() {
    std::process::exit(lifeserver::cli::lifeserver_main(std::env::args_os().collect()));
}
