fn main() {
    let code = convland_harness::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
