//! Named state families.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dims::SubsystemDims;
use super::matrix::{ComplexMatrix, C64};
use super::random::random_density_matrix;
use super::state::{DensityOperator, PureState};
use crate::error::{Error, Result};

/// A parametrized family of test states.
#[derive(Clone, Debug, PartialEq)]
pub enum StateFamily {
    /// `(|00⟩ + |11⟩)/√2`.
    Bell,
    /// Singlet weight `p`, the rest spread uniformly over the triplet space.
    Werner(f64),
    /// Weight `f` on `|Φ+⟩`, the rest spread uniformly over its complement.
    Isotropic(f64),
    /// `k`-qubit GHZ state.
    Ghz(usize),
    /// `(1/M) Σ_i |ii⟩⟨ii|` on two `M`-level systems.
    MaxCorr(usize),
    /// Haar-random purification of the given rank, reproducible from `seed`.
    Random { seed: u64, dims: Vec<usize>, rank: usize },
}

/// Builds a member of a family.
pub fn make_state(family: &StateFamily) -> Result<DensityOperator> {
    match *family {
        StateFamily::Bell => Ok(bell_pure().to_density()),
        StateFamily::Werner(p) => bell_diagonal_mix(p, singlet_vec(), "werner"),
        StateFamily::Isotropic(f) => bell_diagonal_mix(f, phi_plus_vec(), "isotropic"),
        StateFamily::Ghz(k) => {
            if k < 2 {
                return Err(Error::BadParameter(format!("ghz needs at least 2 parties, got {k}")));
            }
            if k > 12 {
                return Err(Error::BadParameter(format!("ghz with {k} parties is too large")));
            }
            let n = 1usize << k;
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            v[n - 1] = v[0];
            Ok(PureState::new(v, SubsystemDims::uniform(&vec![2; k])?)?.to_density())
        }
        StateFamily::MaxCorr(m) => {
            if m < 1 {
                return Err(Error::BadParameter("maxcorr needs M >= 1".into()));
            }
            let mut diag = vec![0.0; m * m];
            for i in 0..m {
                diag[i * m + i] = 1.0 / m as f64;
            }
            DensityOperator::new(ComplexMatrix::from_real_diag(&diag), SubsystemDims::bipartite(m, m))
        }
        StateFamily::Random { seed, ref dims, rank } => {
            let d = SubsystemDims::uniform(dims)?;
            if rank < 1 || rank > d.total() {
                return Err(Error::BadParameter(format!(
                    "rank {rank} outside [1, {}]",
                    d.total()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let op = random_density_matrix(d.total(), rank, &mut rng);
            DensityOperator::new(op, d)
        }
    }
}

fn bell_pure() -> PureState {
    PureState::new(phi_plus_vec(), SubsystemDims::bipartite(2, 2)).expect("normalized")
}

fn phi_plus_vec() -> Vec<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [h, 0.0, 0.0, h].iter().map(|&x| C64::new(x, 0.0)).collect()
}

fn singlet_vec() -> Vec<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [0.0, h, -h, 0.0].iter().map(|&x| C64::new(x, 0.0)).collect()
}

fn bell_diagonal_mix(p: f64, v: Vec<C64>, name: &str) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::BadParameter(format!("{name} parameter {p} outside [0, 1]")));
    }
    let proj = ComplexMatrix::projector(&v);
    let mut op = proj.scale_real(p);
    let rest = &ComplexMatrix::identity(4) - &proj;
    op.axpy(C64::new((1.0 - p) / 3.0, 0.0), &rest);
    Ok(DensityOperator::from_parts_unchecked(
        op.hermitian_part(),
        SubsystemDims::bipartite(2, 2),
        false,
    ))
}

impl FromStr for StateFamily {
    type Err = Error;

    /// Parses `family[:param[,param]]`, e.g. `werner:0.9` or `random:7,2x2,3`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = |msg: String| Error::BadParameter(format!("state `{s}`: {msg}"));
        let real = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| bad("missing parameter".into()))?;
            a.trim().parse::<f64>().map_err(|e| bad(e.to_string()))
        };
        let int = |a: &str| -> Result<usize> { a.trim().parse::<usize>().map_err(|e| bad(e.to_string())) };
        let name = name.to_ascii_lowercase();
        match name.as_str() {
            "bell" => match args {
                None => Ok(Self::Bell),
                Some(_) => Err(bad("bell takes no parameters".into())),
            },
            "werner" => Ok(Self::Werner(real(args)?)),
            "isotropic" => Ok(Self::Isotropic(real(args)?)),
            "ghz" => Ok(Self::Ghz(args.map(int).transpose()?.unwrap_or(3))),
            "maxcorr" => Ok(Self::MaxCorr(int(args.ok_or_else(|| bad("missing M".into()))?)?)),
            "random" => {
                let a = args.ok_or_else(|| bad("expected random:seed,DIMS,rank".into()))?;
                let parts: Vec<&str> = a.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad("expected random:seed,DIMS,rank".into()));
                }
                let seed = parts[0].trim().parse::<u64>().map_err(|e| bad(e.to_string()))?;
                let dims = parts[1].split('x').map(int).collect::<Result<Vec<_>>>()?;
                let rank = int(parts[2])?;
                Ok(Self::Random { seed, dims, rank })
            }
            _ => match name.strip_prefix("ghz").map(int) {
                Some(Ok(k)) if args.is_none() => Ok(Self::Ghz(k)),
                _ => Err(bad("unknown family".into())),
            },
        }
    }
}

impl fmt::Display for StateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bell => write!(f, "bell"),
            Self::Werner(p) => write!(f, "werner:{p}"),
            Self::Isotropic(p) => write!(f, "isotropic:{p}"),
            Self::Ghz(k) => write!(f, "ghz:{k}"),
            Self::MaxCorr(m) => write!(f, "maxcorr:{m}"),
            Self::Random { seed, dims, rank } => {
                let d: Vec<String> = dims.iter().map(usize::to_string).collect();
                write!(f, "random:{seed},{},{rank}", d.join("x"))
            }
        }
    }
}
