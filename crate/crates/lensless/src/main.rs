fn main() {
    lensless::cli::main();
}
