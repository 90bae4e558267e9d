use clap::Parser;

fn main() {
    let cli = srlf::cli::Cli::parse();
    let code = srlf::cli::run(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
