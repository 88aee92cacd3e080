use clap::Parser;
use curvebary::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    match cli::run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            if err.exit_code() == 2 {
                eprintln!("error: {err}");
            } else {
                println!("{}", err.to_json());
            }
            std::process::exit(err.exit_code());
        }
    }
}
