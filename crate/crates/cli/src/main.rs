use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ovc::encoder::{encode_video, EncoderConfig, FlowSource, Iterations};
use ovc::flow::{estimate_flow, write_flo};
use ovc::metrics::{bd_rate, bpp, mac_audit, parse_rd_points, psnr_video, ColorDomain};
use ovc::pipeline::{decode_gop, io, GopPreset, GopStructure, Planes420};
use ovc::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ovc", version, about = "Overfitted neural video codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a video into a bitstream.
    Encode(EncodeArgs),
    /// Decode a bitstream to YUV (or Y4M when the output ends in .y4m).
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// PSNR between two videos, and bpp when a bitstream is given.
    Metrics {
        reference: PathBuf,
        decoded: PathBuf,
        #[command(flatten)]
        raw: RawFormat,
        #[arg(long)]
        bitstream: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Domain::Yuv420)]
        domain: Domain,
    },
    /// BD-rate of a test RD curve against an anchor (files of `bpp psnr` rows).
    Bdrate { anchor: PathBuf, test: PathBuf },
    /// Decoding complexity in MAC per pixel.
    Audit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        gop: Option<Gop>,
        #[arg(long, default_value_t = 9)]
        frames: usize,
    },
    /// Estimate the optical flow from one frame to another and write a .flo file.
    Flow {
        video: PathBuf,
        #[arg(long, default_value_t = 1)]
        from: usize,
        #[arg(long, default_value_t = 0)]
        to: usize,
        #[command(flatten)]
        raw: RawFormat,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Geometry of headerless YUV input (ignored for .y4m).
#[derive(Args, Clone, Copy)]
struct RawFormat {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Yuv420,
    Rgb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gop {
    Ra,
    Intra,
    Ldp,
}

impl From<Gop> for GopPreset {
    fn from(g: Gop) -> Self {
        match g {
            Gop::Ra => GopPreset::RandomAccess,
            Gop::Intra => GopPreset::IntraOnly,
            Gop::Ldp => GopPreset::LowDelayP,
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    raw: RawFormat,
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    gop: Option<Gop>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    pretrain_iters: Option<usize>,
    #[arg(long)]
    frame_iters: Option<usize>,
    #[arg(long)]
    joint_iters: Option<usize>,
    /// Full-length training budgets.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    skip_pretrain: bool,
    #[arg(long)]
    skip_joint: bool,
    /// Read guide flows from `<frame>_<ref>.flo` files instead of estimating them.
    #[arg(long)]
    flo_dir: Option<PathBuf>,
    /// Encode report (JSON); defaults to `<output>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-frame rate table (TSV); defaults to `<output>.rates.tsv`.
    #[arg(long)]
    rate_table: Option<PathBuf>,
    /// Append the `bpp psnr` point to this TSV file.
    #[arg(long)]
    rd: Option<PathBuf>,
    /// Write the decoder-side reconstruction.
    #[arg(long)]
    recon: Option<PathBuf>,
}

fn read_input(path: &Path, raw: RawFormat) -> Result<Vec<Planes420>> {
    let is_y4m = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    if is_y4m {
        return io::read_y4m(path);
    }
    match (raw.width, raw.height) {
        (Some(w), Some(h)) => io::read_yuv(path, w, h, raw.bit_depth),
        _ => Err(Error::Config(format!("{}: raw YUV input needs --width and --height", path.display()))),
    }
}

fn write_output(path: &Path, frames: &[Planes420]) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m")) {
        io::write_y4m(path, frames)
    } else {
        io::write_yuv(path, frames)
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn json_text(v: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))
}

fn encode(a: EncodeArgs) -> Result<serde_json::Value> {
    let mut cfg = match &a.config {
        Some(p) => EncoderConfig::load(p)?,
        None => EncoderConfig::default(),
    };
    if a.full_scale {
        cfg.iterations = Iterations::full_scale();
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(g) = a.gop {
        cfg.gop = g.into();
    }
    if a.frames.is_some() {
        cfg.max_frames = a.frames;
    }
    if let Some(v) = a.pretrain_iters {
        cfg.iterations.pretrain = v;
    }
    if let Some(v) = a.frame_iters {
        cfg.iterations.frame = v;
    }
    if let Some(v) = a.joint_iters {
        cfg.iterations.joint = v;
    }
    cfg.skip_pretrain |= a.skip_pretrain;
    cfg.skip_joint |= a.skip_joint;
    if let Some(d) = a.flo_dir {
        cfg.flow = FlowSource::FloDir(d);
    }
    let video = read_input(&a.input, a.raw)?;
    let enc = encode_video(&video, &cfg)?;
    fs::write(&a.output, &enc.bytes)?;
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.output, ".report.json"));
    fs::write(&report_path, json_text(&enc.report)?)?;
    let table_path = a.rate_table.unwrap_or_else(|| with_suffix(&a.output, ".rates.tsv"));
    fs::write(&table_path, enc.report.rate_table())?;
    if let Some(rd) = &a.rd {
        let fresh = !rd.exists();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(rd)?;
        if fresh {
            writeln!(f, "bpp\tpsnr_db")?;
        }
        writeln!(f, "{}\t{}", enc.report.bpp, enc.report.psnr_db)?;
    }
    if let Some(r) = &a.recon {
        write_output(r, &enc.reconstruction)?;
    }
    Ok(json!({
        "bytes": enc.bytes.len(),
        "frames": enc.report.frame_count,
        "bpp": enc.report.bpp,
        "psnr_db": enc.report.psnr_db,
        "rd_cost": enc.report.rd_cost,
        "report": report_path,
        "rate_table": table_path,
    }))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode { input, output } => {
            let video = decode_gop(&fs::read(&input)?)?;
            let pictures = video.pictures()?;
            write_output(&output, &pictures)?;
            Ok(json!({
                "frames": pictures.len(),
                "width": video.header.width,
                "height": video.header.height,
                "bit_depth": video.header.bit_depth,
            }))
        }
        Command::Metrics { reference, decoded, raw, bitstream, domain } => {
            let a = read_input(&reference, raw)?;
            let b = read_input(&decoded, raw)?;
            let domain = match domain {
                Domain::Yuv420 => ColorDomain::Yuv420,
                Domain::Rgb => ColorDomain::Rgb,
            };
            let psnr = psnr_video(&a, &b, domain)?;
            let mut out = json!({ "frames": a.len(), "psnr_db": psnr, "domain": domain });
            if let Some(bs) = bitstream {
                let bytes = fs::metadata(&bs)?.len() as usize;
                out["bytes"] = json!(bytes);
                out["bpp"] = json!(bpp(bytes, a[0].width, a[0].height, a.len()));
            }
            Ok(out)
        }
        Command::Bdrate { anchor, test } => {
            let a = parse_rd_points(&fs::read_to_string(&anchor)?)?;
            let t = parse_rd_points(&fs::read_to_string(&test)?)?;
            Ok(json!({ "bd_rate_percent": bd_rate(&a, &t)? }))
        }
        Command::Audit { config, gop, frames } => {
            let preset = match (gop, &config) {
                (Some(g), _) => g.into(),
                (None, Some(p)) => EncoderConfig::load(p)?.gop,
                (None, None) => GopPreset::RandomAccess,
            };
            let structure: GopStructure = preset.build(frames)?;
            serde_json::to_value(mac_audit(&structure)).map_err(|e| Error::Format(e.to_string()))
        }
        Command::Flow { video, from, to, raw, output } => {
            let frames = read_input(&video, raw)?;
            let pick = |i: usize| {
                frames.get(i).ok_or_else(|| Error::Config(format!("frame {i} not in a {}-frame video", frames.len())))
            };
            let field = estimate_flow(pick(from)?, pick(to)?)?;
            write_flo(&output, &field)?;
            Ok(json!({ "width": field.width, "height": field.height, "output": output }))
        }
    }
}

/// Process exit status for each error category.
fn exit_status(e: &Error) -> u8 {
    match e {
        Error::Dimension(_) => 10,
        Error::Training(_) => 11,
        Error::Stream(_) => 12,
        Error::Format(_) => 13,
        Error::Config(_) => 14,
        Error::Pipeline(_) => 15,
        Error::Metric(_) => 16,
        Error::Io(_) => 17,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "category": e.category(), "message": e.to_string() } }));
            ExitCode::from(exit_status(&e))
        }
    }
}
