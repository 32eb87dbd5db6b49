fn main() {
    std::process::exit(cshv_solver::cli::run());
}
