//! Plain-text scenario map files.
//!
//! Grammar (line-oriented; `#` starts a comment, blank lines are skipped):
//!
//! ```text
//! M K U eta seed            header
//! x y                       one line per target, K lines
//! (lx, ly, hx, hy)          zero or more obstacle records
//! 0010...                   optional: M rows of M chars from {0, 1}
//! ```
//!
//! Obstacle records give the lower-left corner and the cell extents along x
//! and y. The optional explicit grid lists rows top-down: the first row is
//! `y = M - 1`, characters left to right are `x = 0 .. M - 1`. When both
//! obstacle records and a grid are present they must agree. Writing a file
//! and reading it back yields the identical structure.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{GridMap, Obstacle, ValueModel};
use crate::coord::Coord;
use crate::error::Error;
use crate::Result;

/// Contents of a scenario map file: the world layout plus the generation
/// metadata recorded in the header.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub m: usize,
    pub u: usize,
    pub eta: f64,
    pub seed: u64,
    pub targets: Vec<Coord>,
    pub obstacles: Vec<Obstacle>,
    /// Explicit obstacle grid; set for maps whose obstacles did not come
    /// from rectangle records (ingested terrain).
    pub omega: Option<Array2<u8>>,
}

impl MapFile {
    pub fn from_map(map: &GridMap, u: usize, eta: f64, seed: u64) -> MapFile {
        let omega = if map.obstacles().is_empty() && map.omega_grid().iter().any(|&v| v != 0) {
            Some(map.omega_grid().clone())
        } else {
            None
        };
        MapFile {
            m: map.side(),
            u,
            eta,
            seed,
            targets: map.targets().to_vec(),
            obstacles: map.obstacles().to_vec(),
            omega,
        }
    }

    /// Rebuilds the world, recomputing the value field under `value`.
    pub fn to_map(&self, value: &ValueModel) -> Result<GridMap> {
        GridMap::from_parts(
            self.m,
            self.targets.clone(),
            self.obstacles.clone(),
            self.omega.clone(),
            value,
        )
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {} {} {} {}", self.m, self.targets.len(), self.u, self.eta, self.seed)
            .unwrap();
        for z in &self.targets {
            writeln!(s, "{} {}", z.x, z.y).unwrap();
        }
        for o in &self.obstacles {
            writeln!(
                s,
                "({}, {}, {}, {})",
                o.lower_left.x, o.lower_left.y, o.dims.0, o.dims.1
            )
            .unwrap();
        }
        if let Some(grid) = &self.omega {
            for y in (0..self.m).rev() {
                for x in 0..self.m {
                    s.push(if grid[[x, y]] != 0 { '1' } else { '0' });
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<MapFile> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, strip_comment(l)))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "missing header line"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(hline, "header needs: M K U eta seed"));
        }
        let m: usize = field(fields[0], hline, "M")?;
        let k: usize = field(fields[1], hline, "K")?;
        let u: usize = field(fields[2], hline, "U")?;
        let eta: f64 = field(fields[3], hline, "eta")?;
        let seed: u64 = field(fields[4], hline, "seed")?;
        if m == 0 {
            return Err(parse_err(hline, "M must be positive"));
        }

        let mut targets = Vec::with_capacity(k);
        for _ in 0..k {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(hline, "fewer target lines than K"))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(parse_err(ln, "target line needs: x y"));
            }
            let x: i32 = field(parts[0], ln, "target x")?;
            let y: i32 = field(parts[1], ln, "target y")?;
            let z = Coord::new(x, y);
            if !z.in_bounds(m) {
                return Err(parse_err(ln, "target outside map"));
            }
            targets.push(z);
        }

        let mut obstacles = Vec::new();
        let mut grid_rows: Vec<(usize, String)> = Vec::new();
        for (ln, l) in lines {
            if l.starts_with('(') {
                if !grid_rows.is_empty() {
                    return Err(parse_err(ln, "obstacle record after grid rows"));
                }
                obstacles.push(parse_obstacle(&l, ln, m)?);
            } else {
                grid_rows.push((ln, l));
            }
        }

        let omega = if grid_rows.is_empty() {
            None
        } else {
            if grid_rows.len() != m {
                return Err(parse_err(
                    grid_rows[0].0,
                    format!("grid needs exactly {m} rows, found {}", grid_rows.len()),
                ));
            }
            let mut grid = Array2::zeros((m, m));
            for (row, (ln, l)) in grid_rows.iter().enumerate() {
                if l.chars().count() != m {
                    return Err(parse_err(*ln, format!("grid row needs {m} characters")));
                }
                let y = m - 1 - row;
                for (x, ch) in l.chars().enumerate() {
                    grid[[x, y]] = match ch {
                        '0' => 0,
                        '1' => 1,
                        _ => return Err(parse_err(*ln, "grid characters must be 0 or 1")),
                    };
                }
            }
            Some(grid)
        };

        Ok(MapFile {
            m,
            u,
            eta,
            seed,
            targets,
            obstacles,
            omega,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MapFile> {
        let text = fs::read_to_string(path)?;
        MapFile::parse(&text)
    }
}

fn strip_comment(line: &str) -> String {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    body.trim().to_string()
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::MapFile {
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from {s:?}")))
}

fn parse_obstacle(l: &str, ln: usize, m: usize) -> Result<Obstacle> {
    let inner = l
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| parse_err(ln, "obstacle record needs: (lx, ly, hx, hy)"))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(parse_err(ln, "obstacle record needs 4 fields"));
    }
    let lx: i32 = field(parts[0], ln, "lx")?;
    let ly: i32 = field(parts[1], ln, "ly")?;
    let hx: u32 = field(parts[2], ln, "hx")?;
    let hy: u32 = field(parts[3], ln, "hy")?;
    if hx == 0 || hy == 0 {
        return Err(parse_err(ln, "obstacle extents must be positive"));
    }
    let o = Obstacle::new(Coord::new(lx, ly), (hx, hy));
    if !o.in_bounds(m) {
        return Err(parse_err(ln, "obstacle extends outside map"));
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{generate_map, MapGenConfig};
    use crate::rng::{substream, Domain};

    #[test]
    fn round_trip_generated_map() {
        let cfg = MapGenConfig {
            eta: 0.1,
            ..MapGenConfig::default()
        };
        let mut rng = substream(3, Domain::Episode, 0);
        let map = generate_map(&cfg, &mut rng).unwrap();
        let mf = MapFile::from_map(&map, 2, 0.1, 3);
        let back = MapFile::parse(&mf.render()).unwrap();
        assert_eq!(mf, back);
        let rebuilt = back.to_map(&ValueModel::default()).unwrap();
        assert_eq!(rebuilt.targets(), map.targets());
        assert_eq!(rebuilt.omega_grid(), map.omega_grid());
        assert_eq!(rebuilt.phi(Coord::new(0, 0)), map.phi(Coord::new(0, 0)));
    }

    #[test]
    fn round_trip_explicit_grid() {
        let mut omega = Array2::zeros((4, 4));
        omega[[0, 0]] = 1;
        omega[[3, 2]] = 1;
        let mf = MapFile {
            m: 4,
            u: 1,
            eta: 0.125,
            seed: 99,
            targets: vec![Coord::new(2, 0)],
            obstacles: vec![],
            omega: Some(omega),
        };
        let text = mf.render();
        let back = MapFile::parse(&text).unwrap();
        assert_eq!(mf, back);
    }

    #[test]
    fn grid_rows_are_written_top_down() {
        let mut omega = Array2::zeros((3, 3));
        omega[[0, 2]] = 1; // top-left of the rendered grid
        let mf = MapFile {
            m: 3,
            u: 1,
            eta: 0.0,
            seed: 0,
            targets: vec![],
            obstacles: vec![],
            omega: Some(omega),
        };
        let text = mf.render();
        let grid_lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(grid_lines, vec!["100", "000", "000"]);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "\n# a map\n 5 1 2 0.0 7  # header\n\n2 2 # target\n(0, 0, 2, 2)\n";
        let mf = MapFile::parse(text).unwrap();
        assert_eq!(mf.m, 5);
        assert_eq!(mf.targets, vec![Coord::new(2, 2)]);
        assert_eq!(mf.obstacles.len(), 1);
    }

    #[test]
    fn malformed_inputs_report_line_numbers() {
        let cases = [
            ("", "missing header"),
            ("5 1 2", "header"),
            ("5 2 1 0.0 7\n1 1\n", "fewer target"),
            ("5 1 1 0.0 7\n9 9\n", "outside"),
            ("5 1 1 0.0 7\n1 1\n(4, 4, 3, 3)\n", "outside"),
            ("5 1 1 0.0 7\n1 1\n(0, 0, 0, 2)\n", "positive"),
            ("2 0 1 0.0 7\n01\n", "rows"),
            ("2 0 1 0.0 7\n01\n02\n", "0 or 1"),
        ];
        for (text, needle) in cases {
            match MapFile::parse(text) {
                Err(Error::MapFile { msg, .. }) => {
                    assert!(msg.contains(needle), "{msg:?} lacks {needle:?}")
                }
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn grid_must_match_obstacle_records() {
        // records say (0,0) is an obstacle, grid says (1,1)
        let text = "3 0 1 0.0 0\n(0, 0, 1, 1)\n000\n010\n000\n";
        let mf = MapFile::parse(text).unwrap();
        assert!(mf.to_map(&ValueModel::default()).is_err());
    }
}
