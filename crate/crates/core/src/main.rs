fn main() {
    std::process::exit(biokernel::cli::main_exit_code());
}
