//! Protocol test double for external embedding runners.
//!
//! Each patch (or prompt) embeds to the first `dim` bytes of its digest
//! stream, see `pfm_core::embedding::echo_digest`. Flags inject faults:
//! `--grant-dim N` answers the handshake with `N`, `--wrong-count` returns one
//! row too few, `--crash-after N` exits after `N` batches, `--bad-magic`
//! replies with a corrupted handshake.

use std::io::{BufReader, BufWriter, Read, Write};

use anyhow::{bail, Context, Result};
use clap::Parser;
use pfm_core::embedding::{echo_digest, PROTOCOL_MAGIC};

#[derive(Parser)]
struct Args {
    #[arg(long)]
    grant_dim: Option<u32>,
    #[arg(long)]
    wrong_count: bool,
    #[arg(long)]
    crash_after: Option<u32>,
    #[arg(long)]
    bad_magic: bool,
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn write_rows(w: &mut impl Write, rows: &[Vec<f32>]) -> std::io::Result<()> {
    w.write_all(&(rows.len() as u32).to_le_bytes())?;
    for row in rows {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut input = BufReader::new(std::io::stdin().lock());
    let mut output = BufWriter::new(std::io::stdout().lock());

    let mut magic = [0u8; 5];
    input.read_exact(&mut magic).context("reading handshake")?;
    if &magic != PROTOCOL_MAGIC {
        bail!("unexpected handshake magic");
    }
    let requested = read_u32(&mut input)?;
    let dim = args.grant_dim.unwrap_or(requested);
    output.write_all(if args.bad_magic { b"XXXX\x01" } else { PROTOCOL_MAGIC })?;
    output.write_all(&dim.to_le_bytes())?;
    output.flush()?;

    let dim = dim as usize;
    let mut batches = 0u32;
    loop {
        let mut tag = [0u8; 1];
        match input.read_exact(&mut tag) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        match tag[0] {
            1 => {
                if args.crash_after == Some(batches) {
                    std::process::exit(1);
                }
                let count = read_u32(&mut input)?;
                let mut rows = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let len = read_u32(&mut input)? as usize;
                    let mut png = vec![0u8; len];
                    input.read_exact(&mut png)?;
                    rows.push(echo_digest(&png, dim));
                }
                if args.wrong_count {
                    rows.pop();
                }
                write_rows(&mut output, &rows)?;
                batches += 1;
            }
            2 => {
                let len = read_u32(&mut input)? as usize;
                let mut text = vec![0u8; len];
                input.read_exact(&mut text)?;
                write_rows(&mut output, &[echo_digest(&text, dim)])?;
            }
            other => bail!("unknown request tag {other}"),
        }
    }
}
