fn main() {
    std::process::exit(unilab::main_with_args(std::env::args_os()));
}
