//! Possession archive files: one versioned text file per game.
//!
//! Layout (whitespace-separated, floats printed shortest-round-trip so a
//! write/read/write cycle is byte-identical):
//!
//! ```text
//! courtcast.possessions.v1
//! game <game_id>
//! dt <seconds>
//! count <n_possessions>
//! possession <index>
//! offense <id0> <id1> <id2> <id3> <id4>
//! defense <id0> <id1> <id2> <id3> <id4>
//! attacked_basket high_x|low_x
//! frames <k>
//! <t> <ball_x> <ball_y> <shot_clock> <p0_x> <p0_y> ... <p9_x> <p9_y>
//! ...
//! end
//! ```
//!
//! Player columns follow the possession's role order: the five offense ids
//! ascending, then the five defense ids ascending.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::court::Location2D;
use crate::error::{Error, Result};
use crate::ingest::{Frame, Possession};

const ARCHIVE_FORMAT: &str = "courtcast.possessions.v1";

pub fn write_archive(path: &Path, game_id: &str, possessions: &[Possession]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{ARCHIVE_FORMAT}")?;
    writeln!(w, "game {game_id}")?;
    let dt = possessions.first().map(|p| p.dt).unwrap_or(crate::ingest::POSSESSION_DT);
    writeln!(w, "dt {dt}")?;
    writeln!(w, "count {}", possessions.len())?;
    for p in possessions {
        p.validate()?;
        writeln!(w, "possession {}", p.index_in_game)?;
        writeln!(
            w,
            "offense {}",
            p.offense_player_ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
        )?;
        writeln!(
            w,
            "defense {}",
            p.defense_player_ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
        )?;
        writeln!(
            w,
            "attacked_basket {}",
            if p.attacked_basket_high_x { "high_x" } else { "low_x" }
        )?;
        writeln!(w, "frames {}", p.frames.len())?;
        for f in &p.frames {
            let mut row = Vec::with_capacity(4 + 20);
            row.push(f.t_s.to_string());
            row.push(f.ball.x.to_string());
            row.push(f.ball.y.to_string());
            row.push(f.shot_clock_s.to_string());
            for loc in &f.players {
                row.push(loc.x.to_string());
                row.push(loc.y.to_string());
            }
            writeln!(w, "{}", row.join(" "))?;
        }
        writeln!(w, "end")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<(String, Vec<Possession>)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let mut next_line = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::parse("unexpected end of archive"))?
            .map_err(Error::from)
    };

    let tag = next_line()?;
    if tag != ARCHIVE_FORMAT {
        return Err(Error::Version {
            expected: ARCHIVE_FORMAT.to_string(),
            found: tag,
        });
    }
    let game_id = expect_field(&next_line()?, "game")?;
    let dt: f64 = parse_scalar(&expect_field(&next_line()?, "dt")?)?;
    let count: usize = parse_scalar(&expect_field(&next_line()?, "count")?)?;

    let mut possessions = Vec::with_capacity(count);
    for _ in 0..count {
        let index: u32 = parse_scalar(&expect_field(&next_line()?, "possession")?)?;
        let offense = parse_ids(&expect_field(&next_line()?, "offense")?)?;
        let defense = parse_ids(&expect_field(&next_line()?, "defense")?)?;
        let basket = expect_field(&next_line()?, "attacked_basket")?;
        let attacked_basket_high_x = match basket.as_str() {
            "high_x" => true,
            "low_x" => false,
            other => return Err(Error::parse(format!("unknown basket tag `{other}`"))),
        };
        let n_frames: usize = parse_scalar(&expect_field(&next_line()?, "frames")?)?;
        let mut frames = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let row = next_line()?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::parse(format!("bad float `{s}`: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 24 {
                return Err(Error::parse(format!("frame row has {} columns, expected 24", vals.len())));
            }
            let players = vals[4..]
                .chunks_exact(2)
                .map(|c| Location2D::new(c[0], c[1]))
                .collect();
            frames.push(Frame {
                t_s: vals[0],
                ball: Location2D::new(vals[1], vals[2]),
                shot_clock_s: vals[3],
                players,
            });
        }
        let endmark = next_line()?;
        if endmark != "end" {
            return Err(Error::parse("possession not terminated with `end`"));
        }
        let p = Possession {
            frames,
            dt,
            offense_player_ids: offense,
            defense_player_ids: defense,
            attacked_basket_high_x,
            source_game_id: game_id.clone(),
            index_in_game: index,
        };
        p.validate()?;
        possessions.push(p);
    }
    Ok((game_id, possessions))
}

/// Reads every `.poss` archive in a directory, sorted by file name so the
/// merge order is deterministic.
pub fn read_archive_dir(dir: &Path) -> Result<Vec<(String, Vec<Possession>)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "poss").unwrap_or(false))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_archive(p)).collect()
}

fn expect_field(line: &str, key: &str) -> Result<String> {
    line.strip_prefix(key)
        .map(|rest| rest.trim().to_string())
        .ok_or_else(|| Error::parse(format!("expected `{key} ...`, found `{line}`")))
}

fn parse_scalar<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| Error::parse(format!("bad value `{s}`: {e}")))
}

fn parse_ids(s: &str) -> Result<Vec<u64>> {
    let ids: Vec<u64> = s
        .split_whitespace()
        .map(|t| parse_scalar::<u64>(t))
        .collect::<Result<_>>()?;
    if ids.len() != 5 {
        return Err(Error::parse(format!("expected 5 player ids, found {}", ids.len())));
    }
    Ok(ids)
}
