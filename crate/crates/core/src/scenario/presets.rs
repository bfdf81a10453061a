//! Parameter sweeps built on top of a base configuration.

use std::fmt;
use std::str::FromStr;

use crate::codec::FecRate;
use crate::orchestrator::LinkMode;
use crate::phy::SpreadingFactor;

use super::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// (SF, rate) pairs: accuracy and completion time.
    Fig1,
    /// Rate sweep at SF9.
    Fig2,
    /// Airtime with and without FEC at SF9.
    Fig5,
    /// Interferer density sweep, analytical, plus simulated checkpoints.
    Fig6,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1" => Ok(Preset::Fig1),
            "fig2" => Ok(Preset::Fig2),
            "fig5" => Ok(Preset::Fig5),
            "fig6" => Ok(Preset::Fig6),
            _ => Err(format!("unknown preset {s:?} (expected fig1, fig2, fig5 or fig6)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
        })
    }
}

/// One configuration within a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub cfg: ScenarioConfig,
}

fn sf(v: u8) -> SpreadingFactor {
    SpreadingFactor::new(v).expect("valid SF")
}

fn rate(num: u32, den: u32) -> FecRate {
    FecRate::new(num, den).expect("valid rate")
}

fn with(base: &ScenarioConfig, s: u8, r: FecRate) -> Variant {
    let mut cfg = base.clone();
    cfg.schedule.spreading_factor = sf(s);
    cfg.codec.fec_rate = r;
    Variant { name: format!("sf{s}_r{r}"), cfg }
}

impl Preset {
    pub fn expand(self, base: &ScenarioConfig) -> Vec<Variant> {
        match self {
            Preset::Fig1 => [(7, rate(1, 1)), (7, rate(1, 2)), (9, rate(1, 1)), (9, rate(1, 2)), (12, rate(1, 2))]
                .into_iter()
                .map(|(s, r)| with(base, s, r))
                .collect(),
            Preset::Fig2 => [rate(1, 1), rate(2, 3), rate(1, 2), rate(1, 3)].into_iter().map(|r| with(base, 9, r)).collect(),
            Preset::Fig5 => [rate(1, 1), rate(1, 2)].into_iter().map(|r| with(base, 9, r)).collect(),
            Preset::Fig6 => {
                let mut out = Vec::new();
                for s in [7, 9, 10] {
                    for (lambda, mode) in [
                        (1e-5, LinkMode::Analytical),
                        (1e-4, LinkMode::Analytical),
                        (1e-3, LinkMode::Analytical),
                        (1e-4, LinkMode::Sim),
                    ] {
                        let mut v = with(base, s, rate(1, 2));
                        v.cfg.interference.intensity_per_m2 = lambda;
                        v.cfg.schedule.link_mode = mode;
                        let mode = if mode == LinkMode::Sim { "sim" } else { "analytical" };
                        v.name = format!("sf{s}_lambda{lambda:e}_{mode}");
                        out.push(v);
                    }
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let base = ScenarioConfig::default();
        let names: Vec<String> = Preset::Fig1.expand(&base).into_iter().map(|v| v.name).collect();
        assert_eq!(names, ["sf7_r1", "sf7_r1/2", "sf9_r1", "sf9_r1/2", "sf12_r1/2"]);
        assert_eq!(Preset::Fig2.expand(&base).len(), 4);
        let fig6 = Preset::Fig6.expand(&base);
        assert_eq!(fig6.len(), 12);
        assert_eq!(fig6.iter().filter(|v| v.cfg.schedule.link_mode == LinkMode::Sim).count(), 3);
        assert!(fig6.iter().all(|v| v.cfg.codec.fec_rate == rate(1, 2)));
        assert_eq!(fig6[1].name, "sf7_lambda1e-4_analytical");
        assert_eq!("fig5".parse::<Preset>().unwrap(), Preset::Fig5);
        assert!("fig3".parse::<Preset>().is_err());
    }
}
