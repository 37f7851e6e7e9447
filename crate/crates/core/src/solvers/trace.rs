use std::fmt::Write as _;

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `J` at the reported potential (for the accelerated method, the
    /// projected point `φ̄ⁿ`).
    pub value: f64,
    pub l1_residual: f64,
    /// `½ (p − b)ᵀ K (p − b)` when a Gram is configured.
    pub mmd_sq: Option<f64>,
    /// `d_KL(p ‖ b)`.
    pub kl_y: f64,
    pub elapsed_s: f64,
}

/// Records in strictly increasing iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; panics if the iteration index does not increase.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.iteration > last.iteration,
                "trace iterations must increase ({} after {})",
                record.iteration,
                last.iteration
            );
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [TraceRecord] {
        &mut self.records
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Looks up a numeric column by its CSV name.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let pick: fn(&TraceRecord) -> Option<f64> = match name {
            "iter" => |r| Some(r.iteration as f64),
            "J" => |r| Some(r.value),
            "l1_residual" => |r| Some(r.l1_residual),
            "mmd_sq" => |r| r.mmd_sq,
            "kl_y" => |r| Some(r.kl_y),
            "elapsed_s" => |r| Some(r.elapsed_s),
            _ => return None,
        };
        Some(self.records.iter().map(pick).collect())
    }

    /// CSV with header `iter,J,l1_residual,mmd_sq,kl_y,elapsed_s`. The time
    /// column is left empty unless `with_time` is set, so that two runs of
    /// the same configuration serialise to identical bytes.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut out = String::from("iter,J,l1_residual,mmd_sq,kl_y,elapsed_s\n");
        for r in &self.records {
            let mmd = r.mmd_sq.map(|v| v.to_string()).unwrap_or_default();
            let time = if with_time { r.elapsed_s.to_string() } else { String::new() };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration, r.value, r.l1_residual, mmd, r.kl_y, time
            );
        }
        out
    }
}
