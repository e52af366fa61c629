//! File formats: CSV tables and the binary IF frame dump.
//!
//! Frame dump layout (little endian): the 8-byte magic `DFLYIF01`, a `u64`
//! frame count, then per frame `k: u64`, `tx: u32`, `t_start: f64`,
//! `n_rx: u32`, `n_samples: u32` and `n_rx·n_samples` `f32` samples,
//! channel-major.

use std::io::{BufRead, Read, Write};

use serde::Deserialize;

use crate::chirp2d::Detection;
use crate::elevation::ElevationSample;
use crate::error::{Error, Result};
use crate::synth::{IfFrame, TruthRecord};
use crate::tracker::TrackPoint;

pub const FRAME_MAGIC: &[u8; 8] = b"DFLYIF01";

/// `%.9g`-style formatting: 9 significant digits, no locale, trailing zeros
/// trimmed.
pub fn fmt9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt9(x: Option<f64>) -> String {
    x.map(fmt9).unwrap_or_default()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn write_detections_csv<W: Write>(w: W, dets: &[Detection]) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record([
        "k",
        "tx_channel",
        "tag_id",
        "f_b",
        "range_m",
        "azimuth_deg",
        "phi_plus_rad",
        "phi_minus_rad",
        "snr_db",
    ])?;
    for d in dets {
        wr.write_record([
            d.k.to_string(),
            d.tx_channel.to_string(),
            d.tag_id.to_string(),
            fmt9(d.f_b),
            fmt9(d.range),
            fmt9(d.azimuth.to_degrees()),
            fmt9(d.phi_plus),
            fmt9(d.phi_minus),
            fmt9(d.snr_db),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Elevation rows for every chirp with a selected velocity phase.
pub fn write_elevation_csv<W: Write>(w: W, samples: &[ElevationSample]) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record([
        "k",
        "tag_id",
        "beta_chosen_rad",
        "delta_rad",
        "elevation_deg",
        "v_r_est_mps",
        "exception_flag",
    ])?;
    for s in samples.iter().filter(|s| s.beta_chosen.is_some()) {
        wr.write_record([
            s.k.to_string(),
            s.tag_id.to_string(),
            opt9(s.beta_chosen),
            opt9(s.delta),
            opt9(s.elevation.map(f64::to_degrees)),
            opt9(s.v_r_est),
            (s.exception_flag as u8).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_track_csv<W: Write>(w: W, track: &[TrackPoint]) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record([
        "t",
        "tag_id",
        "x",
        "y",
        "z",
        "range",
        "azimuth_deg",
        "elevation_deg",
        "valid",
    ])?;
    for p in track {
        wr.write_record([
            fmt9(p.t),
            p.tag_id.to_string(),
            fmt9(p.x),
            fmt9(p.y),
            fmt9(p.z),
            fmt9(p.range),
            fmt9(p.azimuth.to_degrees()),
            fmt9(p.elevation.to_degrees()),
            (p.valid as u8).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct TrackRow {
    t: f64,
    tag_id: u32,
    x: f64,
    y: f64,
    z: f64,
    range: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
    valid: u8,
}

pub fn read_track_csv<R: Read>(r: R) -> Result<Vec<TrackPoint>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<TrackRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            Ok(TrackPoint {
                k: i as u64,
                t: row.t,
                tag_id: row.tag_id,
                range: row.range,
                azimuth: row.azimuth_deg.to_radians(),
                elevation: row.elevation_deg.to_radians(),
                x: row.x,
                y: row.y,
                z: row.z,
                valid: row.valid != 0,
            })
        })
        .collect()
}

pub fn write_truth_csv<W: Write>(w: W, truth: &[TruthRecord]) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record([
        "k",
        "t",
        "tag_id",
        "x",
        "y",
        "z",
        "range",
        "azimuth_deg",
        "elevation_deg",
        "v_r",
        "a_r",
    ])?;
    for r in truth {
        wr.write_record([
            r.k.to_string(),
            fmt9(r.t),
            r.tag_id.to_string(),
            fmt9(r.x),
            fmt9(r.y),
            fmt9(r.z),
            fmt9(r.range),
            fmt9(r.azimuth.to_degrees()),
            fmt9(r.elevation.to_degrees()),
            fmt9(r.v_r),
            fmt9(r.a_r),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct TruthRow {
    k: u64,
    t: f64,
    tag_id: u32,
    x: f64,
    y: f64,
    z: f64,
    range: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
    v_r: f64,
    a_r: f64,
}

pub fn read_truth_csv<R: Read>(r: R) -> Result<Vec<TruthRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<TruthRow>()
        .map(|row| {
            let r = row?;
            Ok(TruthRecord {
                k: r.k,
                t: r.t,
                tag_id: r.tag_id,
                x: r.x,
                y: r.y,
                z: r.z,
                range: r.range,
                azimuth: r.azimuth_deg.to_radians(),
                elevation: r.elevation_deg.to_radians(),
                v_r: r.v_r,
                a_r: r.a_r,
            })
        })
        .collect()
}

/// Streams frames into a dump whose frame count is fixed up front.
pub struct FrameWriter<W: Write> {
    w: W,
    expected: u64,
    written: u64,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut w: W, count: u64) -> Result<Self> {
        w.write_all(FRAME_MAGIC)?;
        w.write_all(&count.to_le_bytes())?;
        Ok(Self {
            w,
            expected: count,
            written: 0,
        })
    }

    pub fn write(&mut self, f: &IfFrame) -> Result<()> {
        if self.written == self.expected {
            return Err(Error::Format(format!("more than {} frames written", self.expected)));
        }
        if f.samples.len() != f.n_rx * f.n_samples {
            return Err(Error::Format("frame sample count does not match its header".into()));
        }
        let mut buf = Vec::with_capacity(28 + 4 * f.samples.len());
        buf.extend_from_slice(&f.k.to_le_bytes());
        buf.extend_from_slice(&(f.tx_channel as u32).to_le_bytes());
        buf.extend_from_slice(&f.t_start.to_le_bytes());
        buf.extend_from_slice(&(f.n_rx as u32).to_le_bytes());
        buf.extend_from_slice(&(f.n_samples as u32).to_le_bytes());
        for x in &f.samples {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.w.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.expected {
            return Err(Error::Format(format!(
                "announced {} frames but wrote {}",
                self.expected, self.written
            )));
        }
        self.w.flush()?;
        Ok(self.w)
    }
}

pub fn write_frames<W: Write>(w: W, frames: &[IfFrame]) -> Result<()> {
    let mut fw = FrameWriter::new(w, frames.len() as u64)?;
    for f in frames {
        fw.write(f)?;
    }
    fw.finish()?;
    Ok(())
}

/// Iterates over the frames of a dump.
pub struct FrameReader<R: BufRead> {
    r: R,
    remaining: u64,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("file too short for a frame dump header".into()))?;
        if &magic != FRAME_MAGIC {
            return Err(Error::Format("bad frame dump magic".into()));
        }
        let remaining = read_u64(&mut r)?;
        Ok(Self { r, remaining })
    }

    pub fn count(&self) -> u64 {
        self.remaining
    }

    fn next_frame(&mut self) -> Result<IfFrame> {
        let k = read_u64(&mut self.r)?;
        let tx = read_u32(&mut self.r)? as usize;
        let t_start = f64::from_bits(read_u64(&mut self.r)?);
        let n_rx = read_u32(&mut self.r)? as usize;
        let n_samples = read_u32(&mut self.r)? as usize;
        let n = n_rx
            .checked_mul(n_samples)
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| Error::Format("implausible frame dimensions".into()))?;
        let mut bytes = vec![0u8; 4 * n];
        self.r
            .read_exact(&mut bytes)
            .map_err(|_| Error::Format(format!("truncated samples in frame {k}")))?;
        let samples = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(IfFrame {
            k,
            tx_channel: tx,
            t_start,
            n_rx,
            n_samples,
            samples,
        })
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<IfFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let f = self.next_frame();
        if f.is_err() {
            self.remaining = 0;
        }
        Some(f)
    }
}

pub fn read_frames<R: BufRead>(r: R) -> Result<Vec<IfFrame>> {
    FrameReader::new(r)?.collect()
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("unexpected end of frame dump".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("unexpected end of frame dump".into()))?;
    Ok(u32::from_le_bytes(b))
}
