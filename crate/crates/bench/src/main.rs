fn main() {
    std::process::exit(tkpen_bench::cli::run(std::env::args_os()));
}
