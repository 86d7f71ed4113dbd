//! Bit-level carry-free model of the actuation channel:
//!
//! ```text
//! x[n+1](z) = z^{g_a} x[n](z) + b[n](z) u[n](z) + w[n](z)
//! ```
//!
//! The gain `b[n](z)` has a leading one at `g_det`, known bits down to
//! `g_ran + 1`, and fresh Bernoulli(½) bits from `g_ran` down, some of which
//! may be fixed or revealed to the controller as side information.

mod series;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulate::rng;

pub use series::{cf_add, cf_mul, BitSeries, WINDOW};

/// Degree recorded for the zero state (below any level the window can hold).
pub const ZERO_STATE_DEGREE: i64 = -(WINDOW as i64) - 1;
/// Decay is measured only on steps whose state sits at least this many levels
/// above the cancellable depth, clear of the noise entering below level 0.
pub const DECAY_MARGIN: i64 = 48;
/// Slack over `max(d0, 0)` under which a degree trajectory counts as bounded.
pub const BOUND_SLACK: i64 = 4;
const BLOCK_PATHS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CarryFreeGain {
    pub g_det: i64,
    pub g_ran: i64,
    /// Bits at levels `g_det, g_det - 1, ..., g_ran + 1`; the first must be set.
    pub det_bits: Vec<bool>,
    /// Levels below `g_ran` whose bits are deterministic, with their values.
    pub fixed: BTreeMap<i64, bool>,
    /// Random levels at or below `g_ran` whose realized bits the controller sees.
    pub known_levels: BTreeSet<i64>,
}

impl CarryFreeGain {
    /// Leading one at `g_det`, zeros down to `g_ran + 1`, random from `g_ran` down.
    pub fn new(g_det: i64, g_ran: i64) -> Result<Self> {
        let n = usize::try_from(g_det - g_ran)
            .map_err(|_| Error::InvalidGain(format!("need g_ran <= g_det, got {g_det}, {g_ran}")))?;
        let gain = Self {
            g_det,
            g_ran,
            det_bits: (0..n).map(|i| i == 0).collect(),
            fixed: BTreeMap::new(),
            known_levels: BTreeSet::new(),
        };
        gain.validate()?;
        Ok(gain)
    }

    pub fn with_known(mut self, levels: impl IntoIterator<Item = i64>) -> Result<Self> {
        self.known_levels.extend(levels);
        self.validate()?;
        Ok(self)
    }

    pub fn with_fixed(mut self, bits: impl IntoIterator<Item = (i64, bool)>) -> Result<Self> {
        self.fixed.extend(bits);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGain(m));
        if self.g_ran > self.g_det {
            return bad(format!("need g_ran <= g_det, got {}, {}", self.g_det, self.g_ran));
        }
        if self.det_bits.len() as i64 != self.g_det - self.g_ran {
            return bad(format!(
                "expected {} deterministic bits, got {}",
                self.g_det - self.g_ran,
                self.det_bits.len()
            ));
        }
        if self.det_bits.first() == Some(&false) {
            return bad("the leading deterministic bit must be 1".into());
        }
        if let Some(l) = self.known_levels.iter().find(|&&l| l > self.g_ran || l >= self.g_det) {
            return bad(format!("revealed level {l} is not a random level"));
        }
        if let Some(l) = self.fixed.keys().find(|&&l| l >= self.g_ran) {
            return bad(format!("fixed level {l} must lie below g_ran = {}", self.g_ran));
        }
        if let Some(l) = self.fixed.keys().find(|l| self.known_levels.contains(l)) {
            return bad(format!("level {l} is both fixed and revealed"));
        }
        Ok(())
    }

    fn is_known(&self, level: i64) -> bool {
        level > self.g_ran || self.fixed.contains_key(&level) || self.known_levels.contains(&level)
    }

    /// Number of contiguous levels from `g_det` down whose bits the controller knows.
    pub fn known_depth(&self) -> i64 {
        let mut level = self.g_ran;
        while level > self.g_det - i64::from(WINDOW) && self.is_known(level) {
            level -= 1;
        }
        self.g_det - level
    }

    /// Draws one realization `b[n](z)` within the window below `g_det`.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> BitSeries {
        let mut window = rng.random::<u64>();
        for (j, &bit) in self.det_bits.iter().enumerate() {
            set_bit(&mut window, j as i64, bit);
        }
        for (&level, &bit) in &self.fixed {
            let depth = self.g_det - level;
            if depth < i64::from(WINDOW) {
                set_bit(&mut window, depth, bit);
            }
        }
        BitSeries::from_window(self.g_det, window)
    }
}

fn set_bit(window: &mut u64, depth: i64, bit: bool) {
    let mask = 1u64 << (63 - depth);
    if bit {
        *window |= mask;
    } else {
        *window &= !mask;
    }
}

/// Parses `cf:g_det,g_ran[,known=l1;l2;...][,fixed=l:v;...][,det=bits]`.
pub fn parse_gain(spec: &str) -> Result<CarryFreeGain> {
    let body = spec
        .trim()
        .strip_prefix("cf:")
        .ok_or_else(|| Error::Parse(format!("carry-free gain must start with 'cf:', got {spec:?}")))?;
    let mut parts = body.split(',').map(str::trim);
    let int = |s: Option<&str>| -> Result<i64> {
        let s = s.ok_or_else(|| Error::Parse("cf: needs g_det,g_ran".into()))?;
        s.parse().map_err(|_| Error::Parse(format!("not an integer: {s:?}")))
    };
    let g_det = int(parts.next())?;
    let g_ran = int(parts.next())?;
    let mut gain = CarryFreeGain::new(g_det, g_ran)?;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value, got {part:?}")))?;
        match key.trim() {
            "known" => {
                for l in value.split(';').filter(|s| !s.trim().is_empty()) {
                    gain.known_levels.insert(int(Some(l.trim()))?);
                }
            }
            "fixed" => {
                for item in value.split(';').filter(|s| !s.trim().is_empty()) {
                    let (l, v) = item
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("fixed bits are level:value, got {item:?}")))?;
                    let bit = match v.trim() {
                        "0" => false,
                        "1" => true,
                        other => return Err(Error::Parse(format!("bit must be 0 or 1, got {other:?}"))),
                    };
                    gain.fixed.insert(int(Some(l.trim()))?, bit);
                }
            }
            "det" => {
                gain.det_bits = value
                    .trim()
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::Parse(format!("bit must be 0 or 1, got {other:?}"))),
                    })
                    .collect::<Result<_>>()?;
            }
            other => return Err(Error::Parse(format!("unknown carry-free option {other:?}"))),
        }
    }
    gain.validate()?;
    Ok(gain)
}

/// Control `u` that clears the top `K` levels of `state` for every value of
/// the gain bits the controller cannot see, where `K` is the known depth of
/// the gain. Only the levels of `realized` that are known to the controller
/// are read. Returns `u` and `K`.
pub fn one_step_control(
    state: &BitSeries,
    gain: &CarryFreeGain,
    realized: &BitSeries,
) -> Result<(BitSeries, i64)> {
    let Some(top) = state.degree() else {
        return Err(Error::ZeroState);
    };
    let k = gain.known_depth();
    // The controller's view of the top K gain levels; these bits never depend on unknown ones.
    let known = realized.truncate_below(gain.g_det - k + 1);
    let mut residual = *state;
    let mut u = BitSeries::ZERO;
    for level in (top - k + 1..=top).rev() {
        if residual.coefficient(level) {
            let term = BitSeries::monomial(level - gain.g_det);
            u = cf_add(&u, &term);
            residual = cf_add(&residual, &cf_mul(&known, &term));
        }
    }
    Ok((u, k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    pub g_a: i64,
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    pub initial_degree: i64,
    /// Mean and maximum over paths of the state degree after each step
    /// (index 0 is the initial state); the zero state counts as [`ZERO_STATE_DEGREE`].
    pub mean_degree: Vec<f64>,
    pub max_degree: Vec<i64>,
    pub overall_max_degree: i64,
    /// Mean of `deg(z^{g_a} x[n]) - deg(x[n+1])` over steps far above the
    /// noise floor; `None` when no step qualified.
    pub mean_decay: Option<f64>,
    pub decay_steps: u64,
    /// Every degree stayed within [`BOUND_SLACK`] of `max(d0, 0)`.
    pub bounded: bool,
}

struct DegreeAccumulator {
    degree_sum: Vec<i128>,
    max_degree: Vec<i64>,
    decay_sum: i128,
    decay_steps: u64,
}

fn degree_of(x: &BitSeries) -> i64 {
    x.degree().unwrap_or(ZERO_STATE_DEGREE)
}

/// Runs `paths` independent carry-free plants with `a(z) = z^{g_a}` from a
/// random state of degree `initial_degree`, applying [`one_step_control`] every
/// step and adding `WINDOW` fresh noise bits at levels `-1, -2, ...`.
pub fn simulate_degrees(
    gain: &CarryFreeGain,
    g_a: i64,
    horizon: usize,
    paths: usize,
    seed: u64,
    initial_degree: i64,
) -> Result<DegreeStats> {
    gain.validate()?;
    if horizon < 1 || paths < 1 {
        return Err(Error::InvalidSimulation("horizon and paths must be at least 1".into()));
    }
    let block = |range: std::ops::Range<usize>| -> DegreeAccumulator {
        let mut acc = DegreeAccumulator {
            degree_sum: vec![0; horizon + 1],
            max_degree: vec![i64::MIN; horizon + 1],
            decay_sum: 0,
            decay_steps: 0,
        };
        for path in range {
            let mut rng = rng::path_rng(seed, rng::ROLE_CARRY_FREE, path as u64);
            let mut x = BitSeries::from_window(initial_degree, rng.random::<u64>() | 1 << 63);
            let record = |acc: &mut DegreeAccumulator, n: usize, x: &BitSeries| {
                let d = degree_of(x);
                acc.degree_sum[n] += i128::from(d);
                acc.max_degree[n] = acc.max_degree[n].max(d);
            };
            record(&mut acc, 0, &x);
            for n in 0..horizon {
                let grown = x.shift(g_a);
                let b = gain.realize(&mut rng);
                let noise = BitSeries::from_window(-1, rng.random::<u64>());
                let (effect, k) = match one_step_control(&grown, gain, &b) {
                    Ok((u, k)) => (cf_mul(&b, &u), k),
                    Err(_) => (BitSeries::ZERO, 0),
                };
                x = cf_add(&cf_add(&grown, &effect), &noise);
                let before = degree_of(&grown);
                if before - k >= DECAY_MARGIN {
                    acc.decay_sum += i128::from(before - degree_of(&x));
                    acc.decay_steps += 1;
                }
                record(&mut acc, n + 1, &x);
            }
        }
        acc
    };
    let ranges: Vec<_> = (0..paths)
        .step_by(BLOCK_PATHS)
        .map(|s| s..(s + BLOCK_PATHS).min(paths))
        .collect();
    let parts: Vec<DegreeAccumulator> = ranges.into_par_iter().map(block).collect();
    let mut parts = parts.into_iter();
    let mut acc = parts.next().expect("at least one path");
    for p in parts {
        acc.degree_sum.iter_mut().zip(&p.degree_sum).for_each(|(a, b)| *a += b);
        acc.max_degree.iter_mut().zip(&p.max_degree).for_each(|(a, b)| *a = (*a).max(*b));
        acc.decay_sum += p.decay_sum;
        acc.decay_steps += p.decay_steps;
    }
    let overall_max_degree = acc.max_degree.iter().copied().max().unwrap_or(initial_degree);
    Ok(DegreeStats {
        g_a,
        horizon,
        paths,
        seed,
        initial_degree,
        mean_degree: acc.degree_sum.iter().map(|&s| s as f64 / paths as f64).collect(),
        max_degree: acc.max_degree,
        overall_max_degree,
        mean_decay: (acc.decay_steps > 0).then(|| acc.decay_sum as f64 / acc.decay_steps as f64),
        decay_steps: acc.decay_steps,
        bounded: overall_max_degree <= initial_degree.max(0) + BOUND_SLACK,
    })
}

/// `g_det - g_ran`, plus any revealed or fixed levels forming a contiguous
/// run directly below `g_det - g_ran` deterministic levels.
pub fn cf_zero_error_capacity(gain: &CarryFreeGain) -> i64 {
    gain.known_depth()
}

/// `g_det - g_ran + 1`. Gains carrying side information or fixed bits
/// below `g_ran` are rejected.
pub fn cf_shannon_capacity(gain: &CarryFreeGain) -> Result<i64> {
    if !gain.known_levels.is_empty() || !gain.fixed.is_empty() {
        return Err(Error::InvalidGain(
            "the carry-free Shannon capacity is defined here only for gains without side information".into(),
        ));
    }
    Ok(gain.g_det - gain.g_ran + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_and_depths() {
        let g = parse_gain("cf:1,0").unwrap();
        assert_eq!(g.known_depth(), 1);
        assert_eq!(cf_zero_error_capacity(&g), 1);
        assert_eq!(cf_shannon_capacity(&g).unwrap(), 2);

        let flat = parse_gain("cf:2,2").unwrap();
        assert_eq!(cf_zero_error_capacity(&flat), 0);
        assert_eq!(cf_shannon_capacity(&flat).unwrap(), 1);

        // Level 0 revealed, level -1 random: two known levels.
        let revealed = parse_gain("cf:1,0,known=0").unwrap();
        assert_eq!(cf_zero_error_capacity(&revealed), 2);
        assert!(cf_shannon_capacity(&revealed).is_err());

        // Level -1 fixed to 1 is useless while level 0 is unknown...
        let trap = parse_gain("cf:1,0,fixed=-1:1").unwrap();
        assert_eq!(cf_zero_error_capacity(&trap), 1);
        // ...and pays off once level 0 is revealed.
        let filled = parse_gain("cf:1,0,fixed=-1:1,known=0").unwrap();
        assert_eq!(cf_zero_error_capacity(&filled), 3);

        let g = parse_gain("cf:3,0,det=101").unwrap();
        assert_eq!(g.det_bits, vec![true, false, true]);
        for bad in ["cf:0,1", "cf:1,0,known=1", "cf:1,0,fixed=0:1", "cf:1,0,det=011", "cf:1", "uniform:1,2"] {
            assert!(parse_gain(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn realization_respects_known_bits() {
        let g = parse_gain("cf:2,-1,det=110,fixed=-3:1;-4:0").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let b = g.realize(&mut rng);
            assert_eq!(b.degree(), Some(2));
            assert!(b.coefficient(1) && !b.coefficient(0));
            assert!(b.coefficient(-3) && !b.coefficient(-4));
        }
    }

    #[test]
    fn fully_known_gain_cancels_whole_window() {
        let fixed: Vec<(i64, bool)> = (-62..0).map(|l| (l, l % 3 == 0)).collect();
        let g = CarryFreeGain::new(1, 0).unwrap().with_known([0]).unwrap().with_fixed(fixed).unwrap();
        assert_eq!(g.known_depth(), i64::from(WINDOW));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = g.realize(&mut rng);
        let x = BitSeries::from_window(30, rng.random::<u64>() | 1 << 63);
        let (u, k) = one_step_control(&x, &g, &b).unwrap();
        assert_eq!(k, 64);
        assert!(cf_add(&x, &cf_mul(&b, &u)).is_zero());
    }

    #[test]
    fn zero_state_is_reported() {
        let g = CarryFreeGain::new(1, 0).unwrap();
        let b = BitSeries::monomial(1);
        assert!(matches!(one_step_control(&BitSeries::ZERO, &g, &b), Err(Error::ZeroState)));
    }

    /// Every assignment of the first unknown gain bits leaves the top K state levels clear.
    #[test]
    fn control_is_exhaustively_correct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 1..=12i64 {
            for revealed in 0..=2i64.min(k - 1) {
                let g_ran = 5 - (k - revealed);
                let gain = CarryFreeGain::new(5, g_ran)
                    .unwrap()
                    .with_known((0..revealed).map(|i| g_ran - i))
                    .unwrap();
                assert_eq!(gain.known_depth(), k);
                let unknown_top = g_ran - revealed;
                for _ in 0..4 {
                    let state = BitSeries::from_window(rng.random_range(-20..40), rng.random::<u64>() | 1 << 63);
                    let base = gain.realize(&mut rng);
                    let (u, got) = one_step_control(&state, &gain, &base).unwrap();
                    assert_eq!(got, k);
                    let free = 12.min(u32::try_from(unknown_top - (5 - 63)).unwrap());
                    for assignment in 0..(1u64 << free) {
                        let mut levels: Vec<i64> = base
                            .levels()
                            .into_iter()
                            .filter(|&l| l > unknown_top || l <= unknown_top - i64::from(free))
                            .collect();
                        levels.extend(
                            (0..i64::from(free))
                                .filter(|i| (assignment >> i) & 1 == 1)
                                .map(|i| unknown_top - i),
                        );
                        let b = BitSeries::from_levels(&levels);
                        let next = cf_add(&state, &cf_mul(&b, &u));
                        let top = state.degree().unwrap();
                        for level in top - k + 1..=top {
                            assert!(!next.coefficient(level), "k={k} level={level}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn no_growth_never_raises_degree() {
        let g = CarryFreeGain::new(1, 0).unwrap();
        let s = simulate_degrees(&g, 0, 200, 50, 4, 30).unwrap();
        assert!(s.max_degree.windows(2).all(|w| w[1] <= w[0].max(0)));
        assert!(s.bounded);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let g = CarryFreeGain::new(2, 0).unwrap();
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| simulate_degrees(&g, 2, 300, 200, 9, 0).unwrap())
        };
        assert_eq!(run(1), run(8));
    }
}
