use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("TCS_LOG")).init();
    let cli = tcs_cli::Cli::parse();
    let code = match tcs_cli::run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    };
    std::process::exit(code);
}
