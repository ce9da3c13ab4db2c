fn main() {
    std::process::exit(segmeta::cli::main());
}
