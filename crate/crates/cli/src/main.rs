use clap::Parser;
use dipecho_cli::{config, run, Cli, Command};
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for name in config::preset_names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(&args) {
            Ok(r) => {
                println!("{}: {}", args.scenario, r.headline);
                println!("wrote {} files to {}", r.manifest.outputs.len() + 1, r.out_dir.display());
                ExitCode::SUCCESS
            }
            Err(f) => {
                eprintln!("error: {}", f.message());
                ExitCode::from(f.exit_code() as u8)
            }
        },
    }
}
