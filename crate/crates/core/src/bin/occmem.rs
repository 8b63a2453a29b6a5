fn main() {
    std::process::exit(occmem::cli::dispatch(std::env::args_os()));
}
