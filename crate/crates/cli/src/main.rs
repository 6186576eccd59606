use std::io::Write;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAZE_LOG", "error"))
        .format_timestamp(None)
        .init();
    let inv = graze_cli::run_cli(std::env::args_os());
    print!("{}", inv.stdout);
    eprint!("{}", inv.stderr);
    let _ = std::io::stdout().flush();
    std::process::exit(inv.code);
}
