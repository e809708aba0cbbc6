fn main() {
    std::process::exit(mgt_detect::cli::run(std::env::args_os()));
}
