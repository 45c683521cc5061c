use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::Dims;

/// Stage block that a canonical direction is supported on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// The initial-state block `l_{-1}`.
    Initial,
    /// Reference block `l_i` of stage `i`.
    Stage(usize),
}

impl Source {
    /// Signed stage index, `-1` for the initial block.
    pub fn index(&self) -> i64 {
        match self {
            Source::Initial => -1,
            Source::Stage(i) => *i as i64,
        }
    }

    /// Distance `|k - i|` used by the decay bounds; the initial block acts as stage 0.
    pub fn distance(&self, k: usize) -> usize {
        match self {
            Source::Initial => k,
            Source::Stage(i) => k.abs_diff(*i),
        }
    }

    /// Parses `-1` as the initial block and nonnegative integers as stages.
    pub fn from_index(i: i64, dims: &Dims) -> Result<Self> {
        match i {
            -1 => Ok(Source::Initial),
            i if i >= 0 && (i as usize) < dims.horizon => Ok(Source::Stage(i as usize)),
            _ => Err(Error::IndexOutOfRange(format!(
                "stage {i} outside -1..{}",
                dims.horizon
            ))),
        }
    }
}

/// Direction `l = (l_{-1}; l_0; ...; l_{N-1})` in reference space.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDirection {
    /// Initial-state block, length nx.
    pub initial: Vector,
    /// Stage blocks, each of length nd.
    pub stages: Vec<Vector>,
    /// Support block when built by [`unit_direction`].
    pub source: Option<Source>,
}

impl PerturbationDirection {
    pub fn zeros(dims: &Dims) -> Self {
        Self {
            initial: Vector::zeros(dims.nx),
            stages: vec![Vector::zeros(dims.nd); dims.horizon],
            source: None,
        }
    }

    /// Splits a flat vector of length `nx + N nd`.
    pub fn from_flat(v: &Vector, dims: &Dims) -> Result<Self> {
        if v.len() != dims.n_reference() {
            return Err(Error::Shape(format!(
                "direction has length {}, expected {}",
                v.len(),
                dims.n_reference()
            )));
        }
        Ok(Self {
            initial: v.rows(0, dims.nx).clone_owned(),
            stages: (0..dims.horizon)
                .map(|k| v.rows(dims.nx + k * dims.nd, dims.nd).clone_owned())
                .collect(),
            source: None,
        })
    }

    pub fn flat(&self) -> Vector {
        let mut out: Vec<f64> = self.initial.iter().copied().collect();
        for s in &self.stages {
            out.extend(s.iter());
        }
        Vector::from_vec(out)
    }

    pub fn norm(&self) -> f64 {
        self.flat().norm()
    }

    pub fn check_dims(&self, dims: &Dims) -> Result<()> {
        if self.initial.len() != dims.nx
            || self.stages.len() != dims.horizon
            || self.stages.iter().any(|s| s.len() != dims.nd)
        {
            return Err(Error::Shape(format!(
                "direction does not match dims {dims:?}"
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            initial: &self.initial * factor,
            stages: self.stages.iter().map(|s| s * factor).collect(),
            source: self.source,
        }
    }

    /// True when every block is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.initial.iter().chain(self.stages.iter().flatten()).all(|v| *v == 0.0)
    }
}

/// Canonical basis direction with a single unit entry at coordinate `j`
/// (zero-based) of block `source`.
pub fn unit_direction(dims: &Dims, source: Source, j: usize) -> Result<PerturbationDirection> {
    let mut l = PerturbationDirection::zeros(dims);
    match source {
        Source::Initial => {
            if j >= dims.nx {
                return Err(Error::IndexOutOfRange(format!(
                    "coordinate {j} outside initial block of size {}",
                    dims.nx
                )));
            }
            l.initial[j] = 1.0;
        }
        Source::Stage(i) => {
            if i >= dims.horizon {
                return Err(Error::IndexOutOfRange(format!(
                    "stage {i} outside 0..{}",
                    dims.horizon
                )));
            }
            if j >= dims.nd {
                return Err(Error::IndexOutOfRange(format!(
                    "coordinate {j} outside stage block of size {}",
                    dims.nd
                )));
            }
            l.stages[i][j] = 1.0;
        }
    }
    l.source = Some(source);
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims::new(4, 2, 1, 3).unwrap()
    }

    #[test]
    fn initial_unit_direction() {
        let l = unit_direction(&dims(), Source::Initial, 0).unwrap();
        assert_eq!(l.initial[0], 1.0);
        assert!(l.stages.iter().all(|s| s.iter().all(|v| *v == 0.0)));
        assert_eq!(l.norm(), 1.0);
    }

    #[test]
    fn stage_unit_direction() {
        let l = unit_direction(&dims(), Source::Stage(0), 0).unwrap();
        assert_eq!(l.stages[0][0], 1.0);
        assert_eq!(l.initial.norm(), 0.0);
        assert_eq!(l.flat()[2], 1.0);
    }

    #[test]
    fn out_of_range_coordinates_rejected() {
        assert!(unit_direction(&dims(), Source::Initial, 2).is_err());
        assert!(unit_direction(&dims(), Source::Stage(4), 0).is_err());
        assert!(unit_direction(&dims(), Source::Stage(1), 3).is_err());
        assert!(Source::from_index(-2, &dims()).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let d = dims();
        let v = Vector::from_fn(d.n_reference(), |i, _| i as f64);
        assert_eq!(PerturbationDirection::from_flat(&v, &d).unwrap().flat(), v);
    }

    #[test]
    fn distances() {
        assert_eq!(Source::Initial.distance(3), 3);
        assert_eq!(Source::Stage(5).distance(2), 3);
    }

    proptest::proptest! {
        #[test]
        fn unit_directions_have_unit_norm_and_one_block(i in -1i64..4, j in 0usize..3) {
            let d = dims();
            let width = if i < 0 { d.nx } else { d.nd };
            let src = Source::from_index(i, &d).unwrap();
            let l = unit_direction(&d, src, j % width).unwrap();
            proptest::prop_assert_eq!(l.norm(), 1.0);
            let nonzero_blocks = std::iter::once(&l.initial)
                .chain(&l.stages)
                .filter(|b| b.iter().any(|v| *v != 0.0))
                .count();
            proptest::prop_assert_eq!(nonzero_blocks, 1);
            proptest::prop_assert_eq!(l.source, Some(src));
        }
    }
}
