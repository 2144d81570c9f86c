//! Text persistence for trained embedding sets.
//!
//! Layout: a header line
//! `cause-embeddings v1 <dim> <num_users> <num_items> <mode> <variant>`,
//! then the four matrices row-major (one row per line, treatment users,
//! control users, treatment items, control items), then one line with the
//! two calibration scalars. Values are written with 17 significant digits,
//! so a load of a save reproduces the exact bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CauseError, Result};
use crate::math::Matrix;
use crate::types::{EmbeddingSet, TrainMode};

const MAGIC: &str = "cause-embeddings";
const VERSION: &str = "v1";

/// Which trainer produced a persisted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantTag {
    ProdC,
    ProdT,
    Avg,
    Sp2v,
    Wsp2v,
    Bpr,
}

impl VariantTag {
    pub fn token(&self) -> &'static str {
        match self {
            VariantTag::ProdC => "prod-c",
            VariantTag::ProdT => "prod-t",
            VariantTag::Avg => "avg",
            VariantTag::Sp2v => "sp2v",
            VariantTag::Wsp2v => "wsp2v",
            VariantTag::Bpr => "bpr",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        match s {
            "prod-c" => Ok(VariantTag::ProdC),
            "prod-t" => Ok(VariantTag::ProdT),
            "avg" => Ok(VariantTag::Avg),
            "sp2v" => Ok(VariantTag::Sp2v),
            "wsp2v" => Ok(VariantTag::Wsp2v),
            "bpr" => Ok(VariantTag::Bpr),
            other => Err(CauseError::Config(format!("unknown variant `{other}`"))),
        }
    }

    /// Ranking-only models report AUC but no loss metrics.
    pub fn ranking_only(&self) -> bool {
        matches!(self, VariantTag::Bpr)
    }
}

fn push_matrix(out: &mut String, m: &Matrix) {
    for r in 0..m.rows() {
        let row = m.row(r);
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write!(out, "{v:.16e}").expect("write to string");
        }
        out.push('\n');
    }
}

pub fn save_model(path: &Path, emb: &EmbeddingSet, variant: VariantTag) -> Result<()> {
    if !emb.shapes_consistent() {
        return Err(CauseError::Data("inconsistent embedding shapes".into()));
    }
    let mut out = String::new();
    writeln!(
        out,
        "{MAGIC} {VERSION} {} {} {} {} {}",
        emb.dim(),
        emb.num_users(),
        emb.num_items(),
        emb.mode.token(),
        variant.token()
    )
    .expect("write to string");
    push_matrix(&mut out, &emb.gamma_t);
    push_matrix(&mut out, &emb.gamma_c);
    push_matrix(&mut out, &emb.theta_t);
    push_matrix(&mut out, &emb.theta_c);
    writeln!(out, "{:.16e} {:.16e}", emb.calib_scale, emb.calib_bias).expect("write to string");
    fs::write(path, out)?;
    Ok(())
}

struct LineCursor<'a> {
    rest: &'a str,
    offset: u64,
}

impl<'a> LineCursor<'a> {
    fn new(text: &'a str) -> Self {
        LineCursor {
            rest: text,
            offset: 0,
        }
    }

    /// Next line with the byte offset of its first character.
    fn next_line(&mut self) -> Option<(u64, &'a str)> {
        if self.rest.is_empty() {
            return None;
        }
        let start = self.offset;
        match self.rest.find('\n') {
            Some(pos) => {
                let line = &self.rest[..pos];
                self.rest = &self.rest[pos + 1..];
                self.offset += (pos + 1) as u64;
                Some((start, line))
            }
            None => {
                let line = self.rest;
                self.offset += line.len() as u64;
                self.rest = "";
                Some((start, line))
            }
        }
    }
}

fn parse_row(line: &str, cols: usize, offset: u64) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(cols);
    for field in line.split_whitespace() {
        let v: f64 = field.parse().map_err(|_| CauseError::ModelFormat {
            offset,
            msg: format!("invalid number `{field}`"),
        })?;
        row.push(v);
    }
    if row.len() != cols {
        return Err(CauseError::ModelFormat {
            offset,
            msg: format!("expected {cols} values, got {}", row.len()),
        });
    }
    Ok(row)
}

fn read_matrix(cursor: &mut LineCursor, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let (offset, line) = cursor.next_line().ok_or_else(|| CauseError::ModelFormat {
            offset: cursor.offset,
            msg: format!("truncated while reading {what} row {r}"),
        })?;
        let row = parse_row(line, cols, offset)?;
        m.row_mut(r).copy_from_slice(&row);
    }
    Ok(m)
}

pub fn load_model(path: &Path) -> Result<(EmbeddingSet, VariantTag)> {
    let text = fs::read_to_string(path)?;
    let mut cursor = LineCursor::new(&text);

    let (offset, header) = cursor.next_line().ok_or(CauseError::ModelFormat {
        offset: 0,
        msg: "empty model file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 7 || fields[0] != MAGIC {
        return Err(CauseError::ModelFormat {
            offset,
            msg: "not a cause-embeddings model file".into(),
        });
    }
    if fields[1] != VERSION {
        return Err(CauseError::ModelFormat {
            offset,
            msg: format!("unsupported version `{}` (expected {VERSION})", fields[1]),
        });
    }
    let parse_size = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| CauseError::ModelFormat {
            offset,
            msg: format!("invalid {what} `{s}`"),
        })
    };
    let dim = parse_size(fields[2], "dim")?;
    let num_users = parse_size(fields[3], "user count")?;
    let num_items = parse_size(fields[4], "item count")?;
    let mode = TrainMode::from_token(fields[5]).map_err(|_| CauseError::ModelFormat {
        offset,
        msg: format!("unknown mode `{}`", fields[5]),
    })?;
    let variant = VariantTag::from_token(fields[6]).map_err(|_| CauseError::ModelFormat {
        offset,
        msg: format!("unknown variant `{}`", fields[6]),
    })?;

    let gamma_t = read_matrix(&mut cursor, num_users, dim, "treatment user matrix")?;
    let gamma_c = read_matrix(&mut cursor, num_users, dim, "control user matrix")?;
    let theta_t = read_matrix(&mut cursor, num_items, dim, "treatment item matrix")?;
    let theta_c = read_matrix(&mut cursor, num_items, dim, "control item matrix")?;
    let (calib_offset, calib_line) =
        cursor.next_line().ok_or_else(|| CauseError::ModelFormat {
            offset: cursor.offset,
            msg: "truncated before calibration scalars".into(),
        })?;
    let calib = parse_row(calib_line, 2, calib_offset)?;

    Ok((
        EmbeddingSet {
            gamma_t,
            gamma_c,
            theta_t,
            theta_c,
            calib_scale: calib[0],
            calib_bias: calib[1],
            mode,
        },
        variant,
    ))
}
