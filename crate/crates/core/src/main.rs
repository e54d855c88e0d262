fn main() {
    std::process::exit(opfree::harness::run_command(std::env::args_os()));
}
