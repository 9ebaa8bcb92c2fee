//! Parameters, state space and region partition of the two-level queue.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Raw rates and hysteresis levels of one queue instance.
///
/// Background state 1 serves with `(lambda1, mu1)` until the queue
/// up-crosses `ell_u`; background state 2 serves with `(lambda2, mu2)` until
/// the queue down-crosses `ell_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda1: f64,
    pub mu1: f64,
    pub lambda2: f64,
    pub mu2: f64,
    pub ell_d: u64,
    pub ell_u: u64,
}

/// Traffic ratios `lambda1/mu1`, `lambda2/mu2` and `lambda1/mu2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub rho1: f64,
    pub rho2: f64,
    pub rho12: f64,
}

impl Ratios {
    pub fn new(rho1: f64, rho2: f64, rho12: f64) -> Result<Self> {
        let r = Self { rho1, rho2, rho12 };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<()> {
        check_positive("rho1", self.rho1)?;
        check_positive("rho2", self.rho2)?;
        check_positive("rho12", self.rho12)
    }

    pub fn is_stable(&self) -> bool {
        is_stable(self)
    }
}

/// The stationary law exists iff `rho2 < 1`; `rho1` is unrestricted.
pub fn is_stable(r: &Ratios) -> bool {
    r.rho2 < 1.0
}

/// A state `(ell, k)`: queue length and background state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State {
    pub ell: u64,
    pub k: u8,
}

impl State {
    pub const fn new(ell: u64, k: u8) -> Self {
        Self { ell, k }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.ell, self.k)
    }
}

/// The four blocks partitioning the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `{0..ell_d-1} x {1}`
    S11,
    /// `{ell_d..ell_u} x {1}`
    S21,
    /// `{ell_d..ell_u} x {2}`
    S12,
    /// `{ell_u+1, ...} x {2}`
    S22,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::S11, Region::S21, Region::S12, Region::S22];

    pub fn name(self) -> &'static str {
        match self {
            Region::S11 => "S11",
            Region::S21 => "S21",
            Region::S12 => "S12",
            Region::S22 => "S22",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A parameter set that passed validation, with its ratios attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Model {
    params: ModelParams,
    ratios: Ratios,
}

impl Model {
    /// Checks every invariant of `params` and attaches the ratios.
    pub fn new(params: ModelParams) -> Result<Self> {
        check_positive("lambda1", params.lambda1)?;
        check_positive("mu1", params.mu1)?;
        check_positive("lambda2", params.lambda2)?;
        check_positive("mu2", params.mu2)?;
        if params.ell_d < 1 || params.ell_d >= params.ell_u {
            return Err(Error::LevelOrderViolation {
                ell_d: params.ell_d,
                ell_u: params.ell_u,
            });
        }
        let ratios = Ratios {
            rho1: params.lambda1 / params.mu1,
            rho2: params.lambda2 / params.mu2,
            rho12: params.lambda1 / params.mu2,
        };
        Ok(Self { params, ratios })
    }

    /// Builds a model with the given ratios using `mu1 = 1`.
    ///
    /// The stationary law depends only on the ratios; the absolute rates
    /// only set the time scale of a simulation.
    pub fn from_ratios(r: Ratios, ell_d: u64, ell_u: u64) -> Result<Self> {
        r.check()?;
        let mu1 = 1.0;
        let lambda1 = r.rho1;
        let mu2 = r.rho1 / r.rho12;
        let lambda2 = r.rho2 * r.rho1 / r.rho12;
        let mut m = Self::new(ModelParams {
            lambda1,
            mu1,
            lambda2,
            mu2,
            ell_d,
            ell_u,
        })?;
        // keep the requested ratios bit-for-bit
        m.ratios = r;
        Ok(m)
    }

    /// Parses a JSON document holding either the rate keys
    /// `{lambda1, mu1, lambda2, mu2, ell_d, ell_u}` or the ratio keys
    /// `{rho1, rho2, rho12, ell_d, ell_u}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("expected a JSON object".into()))?;
        Self::from_json_object(obj)
    }

    pub fn from_json_object(obj: &Map<String, Value>) -> Result<Self> {
        const RATE_KEYS: [&str; 4] = ["lambda1", "mu1", "lambda2", "mu2"];
        const RATIO_KEYS: [&str; 3] = ["rho1", "rho2", "rho12"];
        for key in obj.keys() {
            let known = RATE_KEYS.contains(&key.as_str())
                || RATIO_KEYS.contains(&key.as_str())
                || key == "ell_d"
                || key == "ell_u";
            if !known {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        let has_rates = RATE_KEYS.iter().any(|k| obj.contains_key(*k));
        let has_ratios = RATIO_KEYS.iter().any(|k| obj.contains_key(*k));
        let num = |key: &str| -> Result<f64> {
            obj.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Config(format!("missing or non-numeric key `{key}`")))
        };
        let level = |key: &str| -> Result<u64> {
            obj.get(key)
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Config(format!("missing or non-integer key `{key}`")))
        };
        let (ell_d, ell_u) = (level("ell_d")?, level("ell_u")?);
        match (has_rates, has_ratios) {
            (true, false) => Self::new(ModelParams {
                lambda1: num("lambda1")?,
                mu1: num("mu1")?,
                lambda2: num("lambda2")?,
                mu2: num("mu2")?,
                ell_d,
                ell_u,
            }),
            (false, true) => {
                Self::from_ratios(Ratios::new(num("rho1")?, num("rho2")?, num("rho12")?)?, ell_d, ell_u)
            }
            (true, true) => Err(Error::Config(
                "rate keys and ratio keys are mutually exclusive".into(),
            )),
            (false, false) => Err(Error::Config(
                "expected either rate keys or ratio keys".into(),
            )),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn ratios(&self) -> &Ratios {
        &self.ratios
    }

    pub fn ell_d(&self) -> u64 {
        self.params.ell_d
    }

    pub fn ell_u(&self) -> u64 {
        self.params.ell_u
    }

    pub fn is_stable(&self) -> bool {
        is_stable(&self.ratios)
    }

    pub fn require_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable {
                rho2: self.ratios.rho2,
            })
        }
    }

    pub fn contains(&self, s: State) -> bool {
        match s.k {
            1 => s.ell <= self.params.ell_u,
            2 => s.ell >= self.params.ell_d,
            _ => false,
        }
    }

    pub fn region_of(&self, s: State) -> Result<Region> {
        region_of(s, &self.params)
    }

    /// Arrival and service rate in background state `k`.
    pub fn rates(&self, k: u8) -> (f64, f64) {
        if k == 1 {
            (self.params.lambda1, self.params.mu1)
        } else {
            (self.params.lambda2, self.params.mu2)
        }
    }

    /// Outgoing transitions of the untruncated chain from `s`: the arrival
    /// first, then the service completion (absent at `(0,1)`).
    ///
    /// Up-crossing `ell_u` in state 1 switches to state 2; down-crossing
    /// `ell_d` in state 2 switches to state 1.
    pub fn outgoing(&self, s: State) -> Transitions {
        let (lambda, mu) = self.rates(s.k);
        let up = if s.k == 1 && s.ell == self.params.ell_u {
            State::new(s.ell + 1, 2)
        } else {
            State::new(s.ell + 1, s.k)
        };
        let down = (s.ell > 0).then(|| {
            if s.k == 2 && s.ell == self.params.ell_d {
                State::new(s.ell - 1, 1)
            } else {
                State::new(s.ell - 1, s.k)
            }
        });
        Transitions {
            up: (up, lambda),
            down: down.map(|d| (d, mu)),
        }
    }

    /// All states with `ell <= l_max`, ordered by `(ell, k)`.
    pub fn states_up_to(&self, l_max: u64) -> impl Iterator<Item = State> + '_ {
        (0..=l_max).flat_map(move |ell| {
            [1u8, 2]
                .into_iter()
                .map(move |k| State::new(ell, k))
                .filter(move |s| self.contains(*s))
        })
    }
}

/// The (at most two) transitions out of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transitions {
    pub up: (State, f64),
    pub down: Option<(State, f64)>,
}

impl Transitions {
    pub fn total_rate(&self) -> f64 {
        self.up.1 + self.down.map_or(0.0, |d| d.1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> {
        std::iter::once(self.up).chain(self.down)
    }
}

/// The unique region containing `s`.
pub fn region_of(s: State, p: &ModelParams) -> Result<Region> {
    match s.k {
        1 if s.ell < p.ell_d => Ok(Region::S11),
        1 if s.ell <= p.ell_u => Ok(Region::S21),
        2 if s.ell >= p.ell_d && s.ell <= p.ell_u => Ok(Region::S12),
        2 if s.ell > p.ell_u => Ok(Region::S22),
        _ => Err(Error::StateOutsideS(s)),
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveRate { name, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l1: f64, m1: f64, l2: f64, m2: f64, d: u64, u: u64) -> ModelParams {
        ModelParams {
            lambda1: l1,
            mu1: m1,
            lambda2: l2,
            mu2: m2,
            ell_d: d,
            ell_u: u,
        }
    }

    #[test]
    fn validate_attaches_ratios() {
        let m = Model::new(params(1.0, 1.0, 0.5, 1.0, 1, 2)).unwrap();
        assert_eq!(*m.ratios(), Ratios { rho1: 1.0, rho2: 0.5, rho12: 1.0 });

        let m = Model::new(params(1.1, 1.0, 0.9, 1.0, 30, 100)).unwrap();
        let r = m.ratios();
        assert!((r.rho1 - 1.1).abs() < 1e-15);
        assert!((r.rho2 - 0.9).abs() < 1e-15);
        assert!((r.rho12 - 1.1).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_bad_input() {
        assert_eq!(
            Model::new(params(1.0, 1.0, 1.0, 1.0, 3, 3)),
            Err(Error::LevelOrderViolation { ell_d: 3, ell_u: 3 })
        );
        assert!(matches!(
            Model::new(params(1.0, 1.0, 1.0, 1.0, 0, 3)),
            Err(Error::LevelOrderViolation { .. })
        ));
        assert!(matches!(
            Model::new(params(1.0, 0.0, 1.0, 1.0, 1, 3)),
            Err(Error::NonPositiveRate { name: "mu1", .. })
        ));
        assert!(matches!(
            Model::new(params(1.0, 1.0, f64::NAN, 1.0, 1, 3)),
            Err(Error::NonPositiveRate { name: "lambda2", .. })
        ));
    }

    #[test]
    fn from_ratios_canonical_inversion() {
        let m = Model::from_ratios(Ratios::new(1.1, 0.9, 0.7).unwrap(), 30, 100).unwrap();
        let p = m.params();
        assert_eq!(p.mu1, 1.0);
        assert_eq!(p.lambda1, 1.1);
        assert!((p.mu2 - 11.0 / 7.0).abs() < 1e-14);
        assert!((p.lambda2 - 9.9 / 7.0).abs() < 1e-14);

        let m = Model::from_ratios(Ratios::new(1.0, 0.5, 1.0).unwrap(), 1, 2).unwrap();
        let p = m.params();
        assert_eq!((p.lambda1, p.mu1, p.lambda2, p.mu2), (1.0, 1.0, 0.5, 1.0));
    }

    #[test]
    fn stability_depends_on_rho2_only() {
        assert!(is_stable(&Ratios::new(1.0, 0.9, 1.0).unwrap()));
        assert!(!is_stable(&Ratios::new(1.0, 1.0, 1.0).unwrap()));
        assert!(is_stable(&Ratios::new(1.31623, 0.683772, 0.483772).unwrap()));
    }

    #[test]
    fn region_lookup() {
        let p = params(1.0, 1.0, 0.5, 1.0, 3, 7);
        assert_eq!(region_of(State::new(7, 1), &p), Ok(Region::S21));
        assert_eq!(region_of(State::new(3, 2), &p), Ok(Region::S12));
        assert_eq!(region_of(State::new(2, 1), &p), Ok(Region::S11));
        assert_eq!(region_of(State::new(8, 2), &p), Ok(Region::S22));
        assert_eq!(
            region_of(State::new(2, 2), &p),
            Err(Error::StateOutsideS(State::new(2, 2)))
        );
        assert!(region_of(State::new(8, 1), &p).is_err());
        assert!(region_of(State::new(0, 2), &p).is_err());
        assert!(region_of(State::new(4, 3), &p).is_err());
    }

    #[test]
    fn state_enumeration_order() {
        let m = Model::from_ratios(Ratios::new(1.0, 0.5, 1.0).unwrap(), 1, 2).unwrap();
        let states: Vec<_> = m.states_up_to(3).collect();
        assert_eq!(
            states,
            vec![
                State::new(0, 1),
                State::new(1, 1),
                State::new(1, 2),
                State::new(2, 1),
                State::new(2, 2),
                State::new(3, 2),
            ]
        );
    }

    #[test]
    fn switching_transitions() {
        let m = Model::new(params(2.0, 3.0, 0.5, 1.5, 2, 4)).unwrap();
        let t = m.outgoing(State::new(4, 1));
        assert_eq!(t.up, (State::new(5, 2), 2.0));
        assert_eq!(t.down, Some((State::new(3, 1), 3.0)));
        let t = m.outgoing(State::new(2, 2));
        assert_eq!(t.up, (State::new(3, 2), 0.5));
        assert_eq!(t.down, Some((State::new(1, 1), 1.5)));
        let t = m.outgoing(State::new(0, 1));
        assert_eq!(t.down, None);
        assert_eq!(t.total_rate(), 2.0);
    }

    #[test]
    fn json_ingestion() {
        let m = Model::from_json_str(
            r#"{"lambda1":1,"mu1":1,"lambda2":0.5,"mu2":1,"ell_d":1,"ell_u":2}"#,
        )
        .unwrap();
        assert_eq!(m.ratios().rho2, 0.5);
        let m = Model::from_json_str(r#"{"rho1":1.1,"rho2":0.9,"rho12":0.7,"ell_d":30,"ell_u":100}"#)
            .unwrap();
        assert_eq!(m.ratios().rho12, 0.7);

        for bad in [
            r#"{"rho1":1,"mu1":1,"rho2":0.5,"rho12":1,"ell_d":1,"ell_u":2}"#,
            r#"{"ell_d":1,"ell_u":2}"#,
            r#"{"rho1":1,"rho2":0.5,"ell_d":1,"ell_u":2}"#,
            r#"{"rho1":1,"rho2":0.5,"rho12":1,"ell_d":1,"ell_u":2,"extra":3}"#,
            r#"[1,2]"#,
        ] {
            assert!(matches!(Model::from_json_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
