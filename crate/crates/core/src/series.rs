//! Time series recorded along a run, with CSV export.

use std::io::Write;

use crate::stepper::RunStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub max_u: f64,
    pub min_u: f64,
    /// Flat index of the cell holding `max_u`.
    pub argmax: usize,
    /// Cumulative mass added by clipping.
    pub clipped: f64,
    pub cg_iterations: usize,
    /// Latest value of each registered monitor, in label order.
    pub monitors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub labels: Vec<String>,
    pub samples: Vec<Sample>,
    pub status: RunStatus,
    pub t_end: f64,
    pub u_cap: f64,
}

impl TimeSeries {
    pub fn new(labels: Vec<String>, t_end: f64, u_cap: f64) -> Self {
        Self {
            labels,
            samples: Vec::new(),
            status: RunStatus::Running,
            t_end,
            u_cap,
        }
    }

    /// Build a series from `(t, max u)` pairs only (no monitors).
    pub fn from_max_u(points: &[(f64, f64)], status: RunStatus, t_end: f64, u_cap: f64) -> Self {
        let mut s = Self::new(Vec::new(), t_end, u_cap);
        s.status = status;
        for (k, &(t, m)) in points.iter().enumerate() {
            s.samples.push(Sample {
                step: k,
                t,
                dt: if k == 0 { 0.0 } else { t - points[k - 1].0 },
                mass: f64::NAN,
                max_u: m,
                min_u: f64::NAN,
                argmax: 0,
                clipped: 0.0,
                cg_iterations: 0,
                monitors: Vec::new(),
            });
        }
        s
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_u(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.max_u).collect()
    }

    pub fn mass(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mass).collect()
    }

    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some(self.samples.iter().map(|s| s.monitors[k]).collect())
    }

    pub fn final_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "step,t,dt,mass,max_u,min_u,argmax,clipped,cg_iterations")?;
        for l in &self.labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for s in &self.samples {
            write!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{},{:e},{}",
                s.step, s.t, s.dt, s.mass, s.max_u, s.min_u, s.argmax, s.clipped, s.cg_iterations
            )?;
            for m in &s.monitors {
                write!(w, ",{m:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_names_monitors() {
        let mut s = TimeSeries::new(vec!["localLp_p1.5_eta0.2".into()], 1.0, 10.0);
        s.samples.push(Sample {
            step: 0,
            t: 0.0,
            dt: 0.0,
            mass: 1.0,
            max_u: 2.0,
            min_u: 0.0,
            argmax: 3,
            clipped: 0.0,
            cg_iterations: 4,
            monitors: vec![0.5],
        });
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,t,dt,mass,max_u,min_u,argmax,clipped,cg_iterations,localLp_p1.5_eta0.2"
        );
        assert!(lines.next().unwrap().ends_with(",5e-1"));
        assert_eq!(s.column("localLp_p1.5_eta0.2"), Some(vec![0.5]));
        assert_eq!(s.column("missing"), None);
    }
}
