//! JSON file format for QDP data: `dims`, `stages` and `terminal_Q`, with
//! matrices as row-major nested arrays. Floats are written in shortest
//! round-trip form, so parse/serialize cycles are bit-exact.

use serde::{Deserialize, Serialize};

use crate::convexify::ConvexifiedQdp;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{Dims, QdpProblem, Stage};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsFile {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nd: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageFile {
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(rename = "S")]
    pub s: Rows,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D1")]
    pub d1: Rows,
    #[serde(rename = "D2")]
    pub d2: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QdpFile {
    pub dims: DimsFile,
    pub stages: Vec<StageFile>,
    #[serde(rename = "terminal_Q")]
    pub terminal_q: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexifiedQdpFile {
    pub dims: DimsFile,
    pub stages: Vec<StageFile>,
    #[serde(rename = "terminal_Q")]
    pub terminal_q: Rows,
    pub delta: f64,
    #[serde(rename = "Qbar")]
    pub qbar: Vec<Rows>,
}

fn to_rows(m: &Mat) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(rows: &Rows, shape: (usize, usize), what: &str) -> Result<Mat> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::Parse(format!(
            "{what}: expected a {}x{} nested array",
            shape.0, shape.1
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("{what}: non-finite entry")));
    }
    Ok(Mat::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

fn stage_to_file(st: &Stage) -> StageFile {
    StageFile {
        q: to_rows(&st.q),
        r: to_rows(&st.r),
        s: to_rows(&st.s),
        a: to_rows(&st.a),
        b: to_rows(&st.b),
        c: to_rows(&st.c),
        d1: to_rows(&st.d1),
        d2: to_rows(&st.d2),
    }
}

fn stage_from_file(f: &StageFile, dims: &Dims, k: usize) -> Result<Stage> {
    let Dims { nx, nu, nd, .. } = *dims;
    let name = |b: &str| format!("stages[{k}].{b}");
    Ok(Stage {
        q: from_rows(&f.q, (nx, nx), &name("Q"))?,
        r: from_rows(&f.r, (nu, nu), &name("R"))?,
        s: from_rows(&f.s, (nu, nx), &name("S"))?,
        a: from_rows(&f.a, (nx, nx), &name("A"))?,
        b: from_rows(&f.b, (nx, nu), &name("B"))?,
        c: from_rows(&f.c, (nx, nd), &name("C"))?,
        d1: from_rows(&f.d1, (nd, nx), &name("D1"))?,
        d2: from_rows(&f.d2, (nd, nu), &name("D2"))?,
    })
}

impl From<&Dims> for DimsFile {
    fn from(d: &Dims) -> Self {
        Self {
            horizon: d.horizon,
            nx: d.nx,
            nu: d.nu,
            nd: d.nd,
        }
    }
}

impl QdpFile {
    pub fn from_problem(qdp: &QdpProblem) -> Self {
        Self {
            dims: (&qdp.dims()).into(),
            stages: qdp.stages().iter().map(stage_to_file).collect(),
            terminal_q: to_rows(qdp.terminal_q()),
        }
    }

    pub fn into_problem(self) -> Result<QdpProblem> {
        let dims = Dims::new(self.dims.horizon, self.dims.nx, self.dims.nu, self.dims.nd)
            .map_err(|e| Error::Parse(format!("dims: {e}")))?;
        if self.stages.len() != dims.horizon {
            return Err(Error::Parse(format!(
                "stages: expected {} entries, found {}",
                dims.horizon,
                self.stages.len()
            )));
        }
        let stages = self
            .stages
            .iter()
            .enumerate()
            .map(|(k, f)| stage_from_file(f, &dims, k))
            .collect::<Result<Vec<_>>>()?;
        let qn = from_rows(&self.terminal_q, (dims.nx, dims.nx), "terminal_Q")?;
        QdpProblem::new(dims, stages, qn)
    }
}

impl QdpProblem {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: QdpFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_problem()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&QdpFile::from_problem(self)).expect("serializable")
    }
}

impl ConvexifiedQdpFile {
    pub fn from_convexified(conv: &ConvexifiedQdp) -> Self {
        let p = conv.as_problem();
        Self {
            dims: (&p.dims()).into(),
            stages: p.stages().iter().map(stage_to_file).collect(),
            terminal_q: to_rows(p.terminal_q()),
            delta: conv.delta,
            qbar: conv.qbar.iter().map(to_rows).collect(),
        }
    }
}

impl ConvexifiedQdp {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ConvexifiedQdpFile::from_convexified(self))
            .expect("serializable")
    }
}
