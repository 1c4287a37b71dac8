fn main() {
    std::process::exit(agentk_core::harness::cli(std::env::args_os()));
}
