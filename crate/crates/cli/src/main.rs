fn main() {
    std::process::exit(reachbridge::run_cli());
}
