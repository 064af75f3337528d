use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use strata_core::placement::TimeWindow;
use strata_core::sonify::ElementPayload;
use strata_service::{api, AddOptions, Config, ElementUpdate, ProjectStore, ServiceError};

#[derive(Parser)]
#[command(name = "strata", version, about = "Blend text, images and sounds into a music track")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "STRATA_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PlaceArgs {
    /// Clip length in seconds (text and image inputs).
    #[arg(long)]
    duration: Option<f64>,
    /// Restrict the start position to [LO, HI] seconds.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    hint: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
}

impl PlaceArgs {
    fn options(&self) -> AddOptions {
        AddOptions {
            duration_s: self.duration,
            hint: self.hint.as_ref().map(|h| TimeWindow::new(h[0], h[1])),
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a project from a base track and print its id.
    Create {
        base: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Add a text description.
    AddText {
        project: String,
        text: String,
        #[command(flatten)]
        place: PlaceArgs,
    },
    /// Add an image. Without --caption, `<stem>.caption.txt` next to the
    /// image is used when present.
    AddImage {
        project: String,
        image: PathBuf,
        #[arg(long)]
        caption: Option<String>,
        #[command(flatten)]
        place: PlaceArgs,
    },
    /// Add an audio clip.
    AddAudio {
        project: String,
        audio: PathBuf,
        #[command(flatten)]
        place: PlaceArgs,
    },
    /// Change or remove an element.
    Set {
        project: String,
        element: String,
        #[arg(long)]
        gain: Option<f64>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        fade: Option<f64>,
        #[arg(long, conflicts_with_all = ["gain", "start", "fade"])]
        remove: bool,
    },
    /// Print a project as JSON.
    Show { project: String },
    /// List projects.
    List,
    /// List library tracks.
    Library,
    /// Write the mix and optionally its visualization.
    Render {
        project: String,
        #[arg(long, default_value = "mix.wav")]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        viz: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        width: u32,
        #[arg(long, default_value_t = 300)]
        height: u32,
    },
    /// Run the HTTP server.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), String> {
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sidecar_caption(image: &Path) -> Option<String> {
    let stem = image.file_stem()?.to_string_lossy();
    std::fs::read_to_string(image.with_file_name(format!("{stem}.caption.txt"))).ok()
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn fail(e: ServiceError) -> String {
    let body = e.body();
    format!("{}: {}", body.code, body.message)
}

fn run(cli: Cli) -> Result<(), String> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    let store = ProjectStore::open(&config.data_dir, config.library_dir.clone(), config.backends()).map_err(fail)?;

    match cli.command {
        Command::Create { base, name, seed } => {
            let name = name.unwrap_or_else(|| base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            let project = store.create_project(&name, &file_name(&base), &read(&base)?, seed).map_err(fail)?;
            println!("{}", project.id());
        }
        Command::AddText { project, text, place } => {
            let (_, plan) = store
                .add_element(&project, ElementPayload::Text(text), place.options())
                .map_err(fail)?;
            print_json(&plan);
        }
        Command::AddImage {
            project,
            image,
            caption,
            place,
        } => {
            let payload = ElementPayload::Image {
                bytes: read(&image)?,
                file_name: file_name(&image),
                sidecar_caption: caption.or_else(|| sidecar_caption(&image)),
            };
            let (_, plan) = store.add_element(&project, payload, place.options()).map_err(fail)?;
            print_json(&plan);
        }
        Command::AddAudio { project, audio, place } => {
            let payload = ElementPayload::Audio {
                bytes: read(&audio)?,
                file_name: file_name(&audio),
            };
            let (_, plan) = store.add_element(&project, payload, place.options()).map_err(fail)?;
            print_json(&plan);
        }
        Command::Set {
            project,
            element,
            gain,
            start,
            fade,
            remove,
        } => {
            let update = ElementUpdate {
                gain,
                start_s: start,
                fade_s: fade,
                remove,
            };
            let project = store.update_element(&project, &element, update).map_err(fail)?;
            println!("version {}", project.version());
        }
        Command::Show { project } => print_json(&store.get(&project).map_err(fail)?.view()),
        Command::List => {
            for id in store.project_ids() {
                let p = store.get(&id).map_err(fail)?;
                println!("{id}\t{}\tv{}\t{} element(s)", p.record.name, p.version(), p.record.elements.len());
            }
        }
        Command::Library => {
            for entry in store.library().map_err(fail)? {
                println!("{}", entry.name);
            }
        }
        Command::Render {
            project,
            out,
            svg,
            viz,
            width,
            height,
        } => {
            let rendered = store.render(&project).map_err(fail)?;
            write(&out, &rendered.mix_wav)?;
            if let Some(path) = viz {
                write(&path, &rendered.viz_json)?;
            }
            if let Some(path) = svg {
                write(&path, &store.render_svg(&project, width, height).map_err(fail)?)?;
            }
        }
        Command::Serve { port } => {
            let port = port.unwrap_or(config.port);
            let app = api::router(Arc::new(store), config.static_dir.clone());
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
                    .await
                    .map_err(|e| format!("port {port}: {e}"))?;
                tracing::info!("listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| e.to_string())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
