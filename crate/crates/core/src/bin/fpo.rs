fn main() {
    std::process::exit(fpo_core::harness::cli_main(std::env::args_os()));
}
