fn main() {
    std::process::exit(ugc_vqa::cli::run(std::env::args_os()));
}
