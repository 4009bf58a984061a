fn main() {
    std::process::exit(aplevy::cli::run(std::env::args_os()));
}
