//! Text and binary side files: labels, manifests, score dumps, segment
//! lists, split pieces, speaker rankings and RTTM.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use osd3_core::augment::FrameLabelTrack;
use osd3_core::diarization::{format_rttm, parse_rttm, RttmRecord, SpeakerRanking};
use osd3_core::inference::{ScoreTrack, TimedSegment};

use crate::error::{CliError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn line_error(path: &Path, line: usize, message: impl std::fmt::Display) -> CliError {
    CliError::format(path, format!("line {line}: {message}"))
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| line_error(path, line, format!("{field:?} is not a number")))
}

/// One byte per 10 ms frame.
pub fn read_labels(path: &Path) -> Result<FrameLabelTrack> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    FrameLabelTrack::new(bytes).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_labels(path: &Path, labels: &FrameLabelTrack) -> Result<()> {
    std::fs::write(path, labels.labels()).map_err(|e| CliError::io(path, e))
}

/// `wav<TAB>label` records; relative paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    content_lines(&read_text(path)?)
        .map(|(n, line)| {
            let (wav, lab) = line
                .split_once('\t')
                .ok_or_else(|| line_error(path, n, "expected wav<TAB>label"))?;
            Ok((base.join(wav.trim()), base.join(lab.trim())))
        })
        .collect()
}

pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut s = String::new();
    for (w, l) in entries {
        let _ = writeln!(s, "{w}\t{l}");
    }
    write_text(path, &s)
}

/// `frame<TAB>score` lines, frames numbered from 0.
pub fn format_scores(track: &ScoreTrack) -> String {
    let mut s = String::new();
    for (i, v) in track.scores().iter().enumerate() {
        let _ = writeln!(s, "{i}\t{v}");
    }
    s
}

pub fn read_scores(path: &Path) -> Result<ScoreTrack> {
    let mut scores = Vec::new();
    for (n, line) in content_lines(&read_text(path)?) {
        let (idx, v) = line
            .split_once('\t')
            .ok_or_else(|| line_error(path, n, "expected frame<TAB>score"))?;
        if idx.trim().parse::<usize>().ok() != Some(scores.len()) {
            return Err(line_error(
                path,
                n,
                format!("frame index {idx:?} out of sequence"),
            ));
        }
        scores.push(parse_f64(path, n, v.trim())?);
    }
    ScoreTrack::new(scores).map_err(|e| CliError::format(path, e.to_string()))
}

/// `onset offset` lines with 0.01 s resolution.
pub fn format_segments(segments: &[TimedSegment]) -> String {
    let mut s = String::new();
    for seg in segments {
        let _ = writeln!(s, "{:.2} {:.2}", seg.onset(), seg.offset());
    }
    s
}

fn parse_segment(path: &Path, n: usize, onset: &str, offset: &str) -> Result<TimedSegment> {
    let (a, b) = (parse_f64(path, n, onset)?, parse_f64(path, n, offset)?);
    TimedSegment::new(a, b).map_err(|e| line_error(path, n, e))
}

pub fn read_segments(path: &Path) -> Result<Vec<TimedSegment>> {
    content_lines(&read_text(path)?)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(line_error(
                    path,
                    n,
                    format!("expected 2 fields, found {}", f.len()),
                ));
            }
            parse_segment(path, n, f[0], f[1])
        })
        .collect()
}

/// SAD segments from RTTM (union of all records) or `onset offset` text.
pub fn read_sad(path: &Path) -> Result<Vec<TimedSegment>> {
    let text = read_text(path)?;
    let is_rttm = content_lines(&text)
        .next()
        .map_or(false, |(_, l)| l.starts_with("SPEAKER"));
    if !is_rttm {
        return read_segments(path);
    }
    let records = parse_rttm(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    let mut spans: Vec<(f64, f64)> = records.iter().map(|r| (r.onset, r.offset())).collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
        .into_iter()
        .map(|(a, b)| TimedSegment::new(a, b).map_err(CliError::from))
        .collect()
}

/// `onset offset overlap|single` lines.
pub fn format_pieces(pieces: &[(TimedSegment, bool)]) -> String {
    let mut s = String::new();
    for (seg, overlap) in pieces {
        let kind = if *overlap { "overlap" } else { "single" };
        let _ = writeln!(s, "{:.2} {:.2} {kind}", seg.onset(), seg.offset());
    }
    s
}

pub fn read_pieces(path: &Path) -> Result<Vec<(TimedSegment, bool)>> {
    content_lines(&read_text(path)?)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(line_error(
                    path,
                    n,
                    format!("expected 3 fields, found {}", f.len()),
                ));
            }
            let overlap = match f[2] {
                "overlap" => true,
                "single" => false,
                other => return Err(line_error(path, n, format!("unknown piece kind {other:?}"))),
            };
            Ok((parse_segment(path, n, f[0], f[1])?, overlap))
        })
        .collect()
}

/// `onset offset spk1,spk2,...` lines, most likely speaker first.
pub fn read_ranking(path: &Path) -> Result<SpeakerRanking> {
    let entries = content_lines(&read_text(path)?)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(line_error(
                    path,
                    n,
                    format!("expected 3 fields, found {}", f.len()),
                ));
            }
            let speakers = f[2].split(',').map(str::to_string).collect();
            Ok((parse_segment(path, n, f[0], f[1])?, speakers))
        })
        .collect::<Result<Vec<_>>>()?;
    SpeakerRanking::new(entries).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn format_ranking(ranking: &SpeakerRanking) -> String {
    let mut s = String::new();
    for (seg, spk) in ranking.entries() {
        let _ = writeln!(
            s,
            "{:.2} {:.2} {}",
            seg.onset(),
            seg.offset(),
            spk.join(",")
        );
    }
    s
}

pub fn read_rttm(path: &Path) -> Result<Vec<RttmRecord>> {
    parse_rttm(&read_text(path)?).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_rttm(path: &Path, records: &[RttmRecord]) -> Result<()> {
    write_text(path, &format_rttm(records))
}
