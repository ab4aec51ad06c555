use std::io::Write;

use crate::error::Result;

/// CSV header of serialized traces.
pub const TRACE_HEADER: [&str; 6] = ["iter", "objective", "res", "step_w", "step_h", "elapsed_ms"];

/// Per-iteration solver record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub res: f64,
    /// Accepted W step (projected-gradient solvers only).
    pub step_w: Option<f64>,
    pub step_h: Option<f64>,
    /// Wall-clock time since the run started.
    pub elapsed_ms: f64,
    /// Objective evaluations spent in line searches this iteration.
    pub linesearch_evals: usize,
    /// A line search hit its budget or step floor this iteration.
    pub linesearch_exhausted: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub initial_objective: f64,
    pub initial_res: f64,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(initial_objective: f64, initial_res: f64) -> Self {
        Trace {
            initial_objective,
            initial_res,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Objective values including the initial one.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.records.iter().map(|r| r.objective))
            .collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn final_res(&self) -> f64 {
        self.records.last().map_or(self.initial_res, |r| r.res)
    }

    pub fn total_linesearch_evals(&self) -> usize {
        self.records.iter().map(|r| r.linesearch_evals).sum()
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed_ms)
    }

    /// Writes `iter,objective,res,step_w,step_h,elapsed_ms`. Step fields are
    /// empty when absent; `elapsed_ms` is left empty unless `with_timing`,
    /// which keeps the output byte-identical across repeated runs.
    pub fn write_csv<W: Write>(&self, out: W, with_timing: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(TRACE_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            wtr.write_record([
                r.iter.to_string(),
                r.objective.to_string(),
                r.res.to_string(),
                opt(r.step_w),
                opt(r.step_h),
                if with_timing { r.elapsed_ms.to_string() } else { String::new() },
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
