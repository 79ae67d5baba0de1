use serde::{Deserialize, Serialize};

/// Slack applied to window boundaries so grid times such as `300 * 0.01`
/// land on the intended side of `t_on` / `t_off`.
const TIME_SLACK: f64 = 1e-9;

/// Unknown-input waveform for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero,
    /// `amplitude` on `(t_on, t_off]`, zero elsewhere.
    Step {
        t_on: f64,
        t_off: f64,
        amplitude: f64,
    },
    /// `amplitude * sin(2π f0 (t - t_on))` on `(t_on, t_off]`, zero elsewhere.
    WindowedSine {
        t_on: f64,
        t_off: f64,
        amplitude: f64,
        f0: f64,
    },
    /// Zero-order samples on a grid of spacing `dt` starting at `t = 0`;
    /// zero past the last sample.
    #[serde(rename = "custom_samples", alias = "custom-samples")]
    Samples { dt: f64, values: Vec<f64> },
}

fn in_window(t: f64, t_on: f64, t_off: f64) -> bool {
    t > t_on + TIME_SLACK && t <= t_off + TIME_SLACK
}

impl SignalSpec {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            SignalSpec::Zero => 0.0,
            SignalSpec::Step {
                t_on,
                t_off,
                amplitude,
            } => {
                if in_window(t, t_on, t_off) {
                    amplitude
                } else {
                    0.0
                }
            }
            SignalSpec::WindowedSine {
                t_on,
                t_off,
                amplitude,
                f0,
            } => {
                if in_window(t, t_on, t_off) {
                    amplitude * (2.0 * std::f64::consts::PI * f0 * (t - t_on)).sin()
                } else {
                    0.0
                }
            }
            SignalSpec::Samples { dt, ref values } => {
                if t < -TIME_SLACK || dt <= 0.0 {
                    return 0.0;
                }
                let idx = (t / dt).round() as usize;
                values.get(idx).copied().unwrap_or(0.0)
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            SignalSpec::Zero => Ok(()),
            SignalSpec::Step { t_on, t_off, .. } | SignalSpec::WindowedSine { t_on, t_off, .. } => {
                if t_off < t_on {
                    Err(format!("t_off ({t_off}) precedes t_on ({t_on})"))
                } else {
                    Ok(())
                }
            }
            SignalSpec::Samples { dt, .. } => {
                if *dt > 0.0 {
                    Ok(())
                } else {
                    Err("sample spacing must be positive".into())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_half_open() {
        let s = SignalSpec::Step {
            t_on: 3.0,
            t_off: 7.0,
            amplitude: 0.5,
        };
        assert_eq!(s.value(300.0 * 0.01), 0.0);
        assert_eq!(s.value(301.0 * 0.01), 0.5);
        assert_eq!(s.value(700.0 * 0.01), 0.5);
        assert_eq!(s.value(701.0 * 0.01), 0.0);
    }

    #[test]
    fn windowed_sine() {
        let s = SignalSpec::WindowedSine {
            t_on: 2.0,
            t_off: 6.0,
            amplitude: 0.4,
            f0: 0.5,
        };
        assert_eq!(s.value(1.0), 0.0);
        assert!((s.value(2.5) - 0.4 * (std::f64::consts::PI * 0.5).sin()).abs() < 1e-15);
        assert_eq!(s.value(6.5), 0.0);
    }

    #[test]
    fn samples_hold_and_vanish() {
        let s = SignalSpec::Samples {
            dt: 0.1,
            values: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(s.value(0.0), 1.0);
        assert_eq!(s.value(0.2), 3.0);
        assert_eq!(s.value(0.3), 0.0);
    }
}
