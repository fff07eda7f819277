fn main() {
    std::process::exit(mdiplus::cli::run(std::env::args_os()));
}
