fn main() {
    std::process::exit(discfdr::cli::main(std::env::args_os()));
}
