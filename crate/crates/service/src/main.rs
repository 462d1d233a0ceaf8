use clap::Parser;

#[derive(Parser)]
#[command(
    name = "gwhp-service",
    version,
    about = "Serve plume predictions over HTTP"
)]
struct Cli {
    #[command(flatten)]
    serve: gwhp_service::ServeArgs,
}

#[tokio::main]
async fn main() {
    let cli = Cli::parse();
    if let Err(e) = gwhp_service::serve(cli.serve).await {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
