fn main() {
    std::process::exit(iwfa_harness::cli_main(std::env::args_os()));
}
