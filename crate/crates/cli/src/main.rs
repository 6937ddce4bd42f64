fn main() {
    std::process::exit(dfformer_cli::commands::run(std::env::args_os()));
}
