fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(meshfree_poisson::harness::cli(&args));
}
