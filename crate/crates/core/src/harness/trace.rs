use super::HarnessError;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One row of the closed-loop trace, one per control step. Field order is the
/// CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub ref_theta: f64,
    pub nu_r: f64,
    pub omega_r: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_theta: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_theta: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub nu_b: f64,
    pub omega_b: f64,
    pub nu_f: f64,
    pub omega_f: f64,
    pub nu_cmd: f64,
    pub omega_cmd: f64,
    pub k_nu_1: f64,
    pub k_nu_0: f64,
    pub k_omega_1: f64,
    pub k_omega_0: f64,
    #[serde(rename = "E_nu")]
    pub e_nu: f64,
    #[serde(rename = "E_omega")]
    pub e_omega: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub euclid_err: f64,
}

pub const TRACE_COLUMNS: [&str; 29] = [
    "t",
    "ref_x",
    "ref_y",
    "ref_theta",
    "nu_r",
    "omega_r",
    "true_x",
    "true_y",
    "true_theta",
    "est_x",
    "est_y",
    "est_theta",
    "e1",
    "e2",
    "e3",
    "nu_b",
    "omega_b",
    "nu_f",
    "omega_f",
    "nu_cmd",
    "omega_cmd",
    "k_nu_1",
    "k_nu_0",
    "k_omega_1",
    "k_omega_0",
    "E_nu",
    "E_omega",
    "V",
    "euclid_err",
];

impl TraceRow {
    pub fn from_values(v: [f64; 29]) -> Self {
        Self {
            t: v[0],
            ref_x: v[1],
            ref_y: v[2],
            ref_theta: v[3],
            nu_r: v[4],
            omega_r: v[5],
            true_x: v[6],
            true_y: v[7],
            true_theta: v[8],
            est_x: v[9],
            est_y: v[10],
            est_theta: v[11],
            e1: v[12],
            e2: v[13],
            e3: v[14],
            nu_b: v[15],
            omega_b: v[16],
            nu_f: v[17],
            omega_f: v[18],
            nu_cmd: v[19],
            omega_cmd: v[20],
            k_nu_1: v[21],
            k_nu_0: v[22],
            k_omega_1: v[23],
            k_omega_0: v[24],
            e_nu: v[25],
            e_omega: v[26],
            v: v[27],
            euclid_err: v[28],
        }
    }

    pub fn values(&self) -> [f64; 29] {
        [
            self.t,
            self.ref_x,
            self.ref_y,
            self.ref_theta,
            self.nu_r,
            self.omega_r,
            self.true_x,
            self.true_y,
            self.true_theta,
            self.est_x,
            self.est_y,
            self.est_theta,
            self.e1,
            self.e2,
            self.e3,
            self.nu_b,
            self.omega_b,
            self.nu_f,
            self.omega_f,
            self.nu_cmd,
            self.omega_cmd,
            self.k_nu_1,
            self.k_nu_0,
            self.k_omega_1,
            self.k_omega_0,
            self.e_nu,
            self.e_omega,
            self.v,
            self.euclid_err,
        ]
    }
}

/// Plant-side record: truth pose and the velocities actually achieved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub t: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_theta: f64,
    pub nu_actual: f64,
    pub omega_actual: f64,
}

/// Filter output per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub t: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_theta: f64,
    pub cov_trace: f64,
    pub nees: f64,
}

/// Solver and learning internals per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub predicted_cost: f64,
    pub qp_iters: usize,
    pub active_constraints: usize,
    pub kkt_residual: f64,
    pub s_nu: f64,
    pub s_omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct PlotRow<'a> {
    t: f64,
    series: &'a str,
    value: f64,
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn write_rows<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<(), HarnessError> {
    let mut w = csv_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), HarnessError> {
    if rows.is_empty() {
        let mut w = csv_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        w.flush()?;
        return Ok(());
    }
    write_rows(out, rows)
}

pub fn write_truth<W: Write>(out: W, rows: &[TruthRow]) -> Result<(), HarnessError> {
    write_rows(out, rows)
}

pub fn write_estimation<W: Write>(out: W, rows: &[EstimationRow]) -> Result<(), HarnessError> {
    write_rows(out, rows)
}

pub fn write_diagnostics<W: Write>(out: W, rows: &[DiagnosticsRow]) -> Result<(), HarnessError> {
    write_rows(out, rows)
}

/// Long format `t,series,value`: one line per trace column per step.
pub fn write_plot_data<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(["t", "series", "value"])?;
    for r in rows {
        for (name, value) in TRACE_COLUMNS.iter().zip(r.values()).skip(1) {
            w.serialize(PlotRow {
                t: r.t,
                series: name,
                value,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> TraceRow {
        let mut vals = [0.0; 29];
        vals[0] = t;
        vals[28] = 0.125;
        TraceRow::from_values(vals)
    }

    #[test]
    fn header_matches_column_list() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[row(0.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, TRACE_COLUMNS.join(","));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn empty_trace_still_has_header() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{}\n", TRACE_COLUMNS.join(","))
        );
    }

    #[test]
    fn trace_round_trips() {
        let rows = vec![row(0.0), row(0.2)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn plot_data_is_long_format() {
        let mut buf = Vec::new();
        write_plot_data(&mut buf, &[row(0.0), row(0.2)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 28);
        assert!(text.lines().any(|l| l == "0.2,euclid_err,0.125"));
    }
}
