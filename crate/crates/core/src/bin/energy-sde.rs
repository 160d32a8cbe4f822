fn main() {
    std::process::exit(energy_sde::cli::run_cli(std::env::args_os()));
}
