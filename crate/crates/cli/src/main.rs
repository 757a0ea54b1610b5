use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use texweave::edit::BrushMode;
use texweave::error::Error;
use texweave::optim::{write_trace_csv, DecomposeOptions};
use texweave::pipeline::{Filter, MaskKind, PipelineConfig};
use texweave::project::codec::encode_masks;
use texweave::project::imageio::{load_rgb, write_file};
use texweave::project::{EditOp, Project, Region, SegmentationParams};
use texweave::slic::{DEFAULT_COMPACTNESS, DEFAULT_ITERATIONS};

const EXIT_UNREADABLE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "texweave", version, about = "Decompose stylized images into editable filter masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment an image, fit the parameter masks and write a project.
    Decompose(DecomposeArgs),
    /// Render the current output of a project.
    Render {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for one grayscale preview per mask.
        #[arg(long)]
        mask_previews: Option<PathBuf>,
    },
    /// Append an edit to the project's log.
    Edit {
        #[arg(long)]
        project: PathBuf,
        #[command(subcommand)]
        op: EditCommand,
    },
    /// Print l1, tv and noise_sigma of the current state as JSON.
    Metrics {
        #[arg(long)]
        project: PathBuf,
        /// Reference image for l1 (defaults to the project input).
        #[arg(long)]
        against: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    segments: usize,
    #[arg(long, default_value_t = DEFAULT_COMPACTNESS)]
    compactness: f32,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.2)]
    tv: f64,
    #[arg(long)]
    out: PathBuf,
    /// Filter to leave out (bilateral, xdog, bump, contrast). Repeatable.
    #[arg(long, value_parser = parse_filter)]
    disable: Vec<Filter>,
}

/// Segments to act on: `--labels 1,2,3` or `--rect x,y,w,h`.
#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct RegionArgs {
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<u32>>,
    #[arg(long, value_parser = parse_rect)]
    rect: Option<Region>,
}

impl RegionArgs {
    fn region(self) -> Region {
        match (self.labels, self.rect) {
            (Some(l), _) => Region::Labels(l),
            (None, Some(r)) => r,
            (None, None) => unreachable!("clap requires one of the two"),
        }
    }
}

#[derive(Subcommand)]
enum EditCommand {
    /// Scale and offset one mask everywhere.
    Global {
        #[arg(long, value_parser = parse_mask)]
        mask: MaskKind,
        #[arg(long, default_value_t = 1.0)]
        factor: f32,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        offset: f32,
    },
    /// Paint one mask with a round brush.
    Brush {
        #[arg(long, value_parser = parse_mask)]
        mask: MaskKind,
        #[arg(long, allow_hyphen_values = true)]
        x: f32,
        #[arg(long, allow_hyphen_values = true)]
        y: f32,
        #[arg(long)]
        radius: f32,
        #[arg(long, default_value_t = 0.5)]
        hardness: f32,
        #[arg(long, allow_hyphen_values = true)]
        value: f32,
        #[arg(long, value_parser = parse_mode, default_value = "set")]
        mode: BrushMode,
    },
    /// Interpolate two mask sets with a grayscale blend mask.
    Blend {
        /// Mask container or project directory (default: current masks).
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long)]
        mask_file: PathBuf,
    },
    /// Histogram-match segment colors to a reference selection.
    Match {
        #[arg(long, value_delimiter = ',')]
        source: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        reference: Vec<u32>,
    },
    /// Re-segment a region with a different number of segments.
    Lod {
        #[command(flatten)]
        region: RegionArgs,
        #[arg(long)]
        segments: usize,
    },
    /// Copy segments to an offset position.
    Copy {
        #[command(flatten)]
        region: RegionArgs,
        #[arg(long, allow_hyphen_values = true)]
        dx: i64,
        #[arg(long, allow_hyphen_values = true)]
        dy: i64,
    },
    /// Blend segment colors towards a fixed color.
    Color {
        #[command(flatten)]
        region: RegionArgs,
        /// RGB in [0,1], e.g. `0.9,0.2,0.1`.
        #[arg(long, value_parser = parse_rgb)]
        color: [f32; 3],
        #[arg(long)]
        t: f32,
    },
    /// Blend segment colors towards the mean of another image.
    Content {
        #[command(flatten)]
        region: RegionArgs,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        t: f32,
    },
    /// Remove an edit and everything after it.
    Undo {
        #[arg(long)]
        id: u64,
    },
}

fn parse_filter(s: &str) -> Result<Filter, String> {
    Filter::from_name(s).map_err(|e| e.to_string())
}

fn parse_rgb(s: &str) -> Result<[f32; 3], String> {
    let v: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated values".to_string())
}

fn parse_mask(s: &str) -> Result<MaskKind, String> {
    MaskKind::from_name(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<BrushMode, String> {
    match s {
        "set" => Ok(BrushMode::Set),
        "add" => Ok(BrushMode::Add),
        _ => Err(format!("unknown brush mode '{s}' (set or add)")),
    }
}

fn parse_rect(s: &str) -> Result<Region, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad rectangle '{s}'")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, width, height] => Ok(Region::Rect { x, y, width, height }),
        _ => Err("rectangle needs x,y,width,height".into()),
    }
}

enum Failure {
    Unreadable(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Unreadable(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Unreadable(format!("{}: {e}", path.display())))
}

fn decompose(args: DecomposeArgs) -> Result<(), Failure> {
    let mut project = Project::from_image_bytes(&read(&args.input)?)
        .map_err(|e| Failure::Unreadable(format!("{}: {e}", args.input.display())))?;
    let mut cfg = PipelineConfig::default();
    for f in &args.disable {
        cfg.enabled.set(*f, false);
    }
    let opts = DecomposeOptions {
        iterations: args.iters,
        learning_rate: args.lr,
        lambda_tv: args.tv,
        ..Default::default()
    };
    let seg = SegmentationParams {
        segments: args.segments,
        compactness: args.compactness,
        iterations: DEFAULT_ITERATIONS,
    };
    let total = args.iters;
    let result = project.decompose(seg, cfg, &opts, |row| {
        let done = row.iteration + 1;
        if done % 10 == 0 || done == total {
            eprintln!(
                "iteration {done}/{total}  l1 {:.5}  tv {:.5}  total {:.5}",
                row.l1, row.tv, row.total
            );
        }
    })?;
    project.save(&args.out)?;
    let mut csv = Vec::new();
    write_trace_csv(&result.trace, &mut csv).expect("writing to memory");
    write_file(&args.out.join("loss.csv"), &csv)?;
    eprintln!(
        "{} segments, final l1 {:.5}, written to {}",
        project.segments()?.segment_count(),
        result.final_l1,
        args.out.display()
    );
    Ok(())
}

fn load(dir: &Path) -> Result<Project, Failure> {
    Project::load(dir).map_err(|e| Failure::Unreadable(format!("{}: {e}", dir.display())))
}

fn render(project: &Path, out: &Path, previews: Option<&Path>) -> Result<(), Failure> {
    let p = load(project)?;
    if !p.is_decomposed() {
        return Err(Failure::Unreadable(format!("{} has not been decomposed", project.display())));
    }
    write_file(out, &p.render_png()?)?;
    if let Some(dir) = previews {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Unreadable(format!("{}: {e}", dir.display())))?;
        for kind in MaskKind::ALL {
            write_file(&dir.join(format!("{kind}.png")), &p.mask_preview_png(kind)?)?;
        }
    }
    Ok(())
}

/// Registers a mask set given as a container file or a project directory.
fn mask_asset(p: &mut Project, path: Option<PathBuf>) -> Result<Option<String>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let bytes = if path.is_dir() {
        encode_masks(load(&path)?.masks()?)
    } else {
        read(&path)?
    };
    Ok(Some(p.add_asset(bytes)))
}

fn edit(dir: &Path, cmd: EditCommand) -> Result<(), Failure> {
    let mut p = load(dir)?;
    let op = match cmd {
        EditCommand::Undo { id } => {
            p.undo(id)?;
            p.save(dir)?;
            println!("{}", serde_json::json!({ "undone": id, "edits": p.edits().len() }));
            return Ok(());
        }
        EditCommand::Global { mask, factor, offset } => EditOp::Global { mask, factor, offset },
        EditCommand::Brush {
            mask,
            x,
            y,
            radius,
            hardness,
            value,
            mode,
        } => EditOp::Brush {
            mask,
            center: (x, y),
            radius,
            hardness,
            value,
            mode,
        },
        EditCommand::Blend { a, b, mask_file } => {
            let a = mask_asset(&mut p, a)?;
            let b = mask_asset(&mut p, b)?;
            let blend = p.add_asset(read(&mask_file)?);
            EditOp::Blend { a, b, blend }
        }
        EditCommand::Match { source, reference } => EditOp::Match {
            source: Region::Labels(source),
            reference: Region::Labels(reference),
        },
        EditCommand::Lod { region, segments } => EditOp::Lod {
            region: region.region(),
            segments,
        },
        EditCommand::Copy { region, dx, dy } => EditOp::Copy {
            source: region.region(),
            dx,
            dy,
        },
        EditCommand::Color { region, color, t } => EditOp::Color {
            region: region.region(),
            color,
            t,
        },
        EditCommand::Content { region, image, t } => {
            load_rgb(&image).map_err(|e| Failure::Unreadable(format!("{}: {e}", image.display())))?;
            let content = p.add_asset(read(&image)?);
            EditOp::Content {
                region: region.region(),
                content,
                t,
            }
        }
    };
    let id = p.apply_edit(op)?;
    p.save(dir)?;
    println!("{}", serde_json::json!({ "edit_id": id }));
    Ok(())
}

fn metrics(dir: &Path, against: Option<&Path>) -> Result<(), Failure> {
    let p = load(dir)?;
    let reference = match against {
        Some(path) => Some(load_rgb(path).map_err(|e| Failure::Unreadable(format!("{}: {e}", path.display())))?),
        None => None,
    };
    let m = p.metrics(reference.as_ref())?;
    println!("{}", serde_json::to_string(&m).expect("plain numbers"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    texweave::par::init_threads_from_env();
    let result = match cli.command {
        Command::Decompose(args) => decompose(args),
        Command::Render {
            project,
            out,
            mask_previews,
        } => render(&project, &out, mask_previews.as_deref()),
        Command::Edit { project, op } => edit(&project, op),
        Command::Metrics { project, against } => metrics(&project, against.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Unreadable(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_UNREADABLE)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
