//! Real-map ingestion: turns a delimited text grid of building heights into
//! an obstacle grid, plus load/save for the resulting 0/1 grids.
//!
//! Height grids are plain text: one row per line, columns separated by
//! whitespace or commas, heights in meters. The first line is the top row of
//! the map (highest y), matching the map-file grid convention. Obstacle
//! grids use the same orientation with one contiguous run of `0`/`1` digits
//! per line. `#` starts a comment in both formats.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::Error;
use crate::Result;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::MapFile {
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("").trim();
            (i + 1, body)
        })
        .filter(|(_, body)| !body.is_empty())
        .collect()
}

/// Parses a rectangular height grid. Returns heights indexed `[x, y]` with
/// `y = 0` at the bottom row.
pub fn parse_height_grid(text: &str) -> Result<Array2<f64>> {
    let lines = content_lines(text);
    if lines.is_empty() {
        return Err(parse_err(1, "height grid is empty"));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(lines.len());
    let mut width = 0usize;
    for (lineno, body) in lines {
        let mut vals = Vec::new();
        for tok in body.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad height value {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite height {v}")));
            }
            vals.push(v);
        }
        if width == 0 {
            width = vals.len();
        } else if vals.len() != width {
            return Err(parse_err(
                lineno,
                format!("row has {} columns, expected {width}", vals.len()),
            ));
        }
        rows.push((lineno, vals));
    }
    let height = rows.len();
    let mut grid = Array2::zeros((width, height));
    for (row_idx, (_, vals)) in rows.iter().enumerate() {
        let y = height - 1 - row_idx;
        for (x, v) in vals.iter().enumerate() {
            grid[[x, y]] = *v;
        }
    }
    Ok(grid)
}

/// Thresholds a height grid into an obstacle grid: a cell is an obstacle
/// exactly when its height is at least `threshold_m`. Returns the grid and
/// the fraction of obstacle cells.
pub fn threshold_obstacles(heights: &Array2<f64>, threshold_m: f64) -> Result<(Array2<u8>, f64)> {
    if !(threshold_m > 0.0) {
        return Err(Error::domain("height threshold must be positive"));
    }
    let omega = heights.mapv(|h| u8::from(h >= threshold_m));
    let blocked: usize = omega.iter().map(|&v| v as usize).sum();
    let coverage = blocked as f64 / omega.len() as f64;
    Ok((omega, coverage))
}

/// Renders an obstacle grid as digit rows, top row first.
pub fn render_obstacle_grid(omega: &Array2<u8>) -> String {
    let (w, h) = omega.dim();
    let mut out = String::with_capacity((w + 1) * h);
    for row in (0..h).rev() {
        for x in 0..w {
            out.push(if omega[[x, row]] != 0 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Parses an obstacle grid written by [`render_obstacle_grid`].
pub fn parse_obstacle_grid(text: &str) -> Result<Array2<u8>> {
    let lines = content_lines(text);
    if lines.is_empty() {
        return Err(parse_err(1, "obstacle grid is empty"));
    }
    let width = lines[0].1.len();
    let height = lines.len();
    let mut grid = Array2::zeros((width, height));
    for (row_idx, (lineno, body)) in lines.iter().enumerate() {
        if body.len() != width {
            return Err(parse_err(
                *lineno,
                format!("row has {} cells, expected {width}", body.len()),
            ));
        }
        let y = height - 1 - row_idx;
        for (x, ch) in body.chars().enumerate() {
            grid[[x, y]] = match ch {
                '0' => 0,
                '1' => 1,
                other => {
                    return Err(parse_err(*lineno, format!("bad grid cell {other:?}")));
                }
            };
        }
    }
    Ok(grid)
}

pub fn save_obstacle_grid(omega: &Array2<u8>, path: &Path) -> Result<()> {
    fs::write(path, render_obstacle_grid(omega))?;
    Ok(())
}

pub fn load_obstacle_grid(path: &Path) -> Result<Array2<u8>> {
    parse_obstacle_grid(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heights_below_threshold_give_no_obstacles() {
        let grid = parse_height_grid("1 2 3\n4 5 6\n").unwrap();
        let (omega, coverage) = threshold_obstacles(&grid, 10.0).unwrap();
        assert_eq!(coverage, 0.0);
        assert!(omega.iter().all(|&v| v == 0));
    }

    #[test]
    fn threshold_is_inclusive_and_reports_coverage() {
        let grid = parse_height_grid("40 39.9\n0 41\n").unwrap();
        let (omega, coverage) = threshold_obstacles(&grid, 40.0).unwrap();
        // top row is y=1: (0,1)=40, (1,1)=39.9; bottom row: (0,0)=0, (1,0)=41
        assert_eq!(omega[[0, 1]], 1);
        assert_eq!(omega[[1, 1]], 0);
        assert_eq!(omega[[0, 0]], 0);
        assert_eq!(omega[[1, 0]], 1);
        assert!((coverage - 0.5).abs() < 1e-12);
    }

    #[test]
    fn commas_and_comments_parse() {
        let grid = parse_height_grid("# roof heights\n1, 2, 3\n4,5,6 # row\n").unwrap();
        assert_eq!(grid.dim(), (3, 2));
        assert_eq!(grid[[2, 1]], 3.0);
        assert_eq!(grid[[0, 0]], 4.0);
    }

    #[test]
    fn ragged_rows_are_rejected_with_line_numbers() {
        let err = parse_height_grid("1 2 3\n4 5\n").unwrap_err();
        match err {
            Error::MapFile { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_and_bad_values_are_rejected() {
        assert!(parse_height_grid("  \n# only comments\n").is_err());
        assert!(parse_height_grid("1 x 3\n").is_err());
        assert!(threshold_obstacles(&Array2::zeros((2, 2)), 0.0).is_err());
    }

    #[test]
    fn obstacle_grid_round_trips() {
        let grid = parse_height_grid("50 0 0\n0 0 50\n0 50 0\n").unwrap();
        let (omega, _) = threshold_obstacles(&grid, 10.0).unwrap();
        let text = render_obstacle_grid(&omega);
        assert_eq!(text, "100\n001\n010\n");
        let back = parse_obstacle_grid(&text).unwrap();
        assert_eq!(back, omega);
    }

    #[test]
    fn fifty_meter_area_with_ten_meter_cells_is_five_by_five() {
        let row = "0 0 0 0 0\n";
        let text = row.repeat(5);
        let grid = parse_height_grid(&text).unwrap();
        assert_eq!(grid.dim(), (5, 5));
    }
}
