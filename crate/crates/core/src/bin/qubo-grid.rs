fn main() {
    std::process::exit(qubo_grid::cli::main_with(std::env::args_os()));
}
