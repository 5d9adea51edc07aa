fn main() {
    std::process::exit(stabent::main_with(std::env::args_os()));
}
