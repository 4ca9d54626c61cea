//! Test reports and their serialized forms.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::calibration::DetectedInterval;
use crate::error::Result;
use crate::kernels::Kernel;
use crate::statistic::WindowPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SignedRank,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub n: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub kernel: Kernel,
    pub policy: WindowPolicy,
    pub min_window: usize,
    pub one_sided: bool,
    /// Noise scale used by the Gaussian reference.
    pub sigma: Option<f64>,
    pub t_n: f64,
    pub kappa: f64,
    pub p_value: f64,
    pub reject: bool,
    pub intervals: Vec<DetectedInterval>,
    pub minimal_intervals: Vec<DetectedInterval>,
    pub timing_ms: Option<f64>,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(crate::Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

/// Pretty JSON with every float written to 17 significant digits.
struct Digits17(PrettyFormatter<'static>);

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any value as pretty JSON with 17-significant-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn emit_report(r: &TestReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => Ok(to_json_string(r)?.into_bytes()),
        ReportFormat::Table => Ok(render_table(r).into_bytes()),
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<TestReport> {
    Ok(serde_json::from_slice(bytes)?)
}

fn render_table(r: &TestReport) -> String {
    let mut s = String::new();
    let method = match r.method {
        Method::SignedRank => "multiscale signed-rank test",
        Method::Gaussian => "Gaussian-calibrated multiscale test",
    };
    let _ = writeln!(s, "{method} (msrank {})", r.version);
    let _ = writeln!(s, "  n            {}", r.n);
    let _ = writeln!(s, "  kernel       {}", r.kernel);
    let _ = writeln!(s, "  windows      {} (min size {})", r.policy, r.min_window);
    let _ = writeln!(s, "  alpha        {}", r.alpha);
    let _ = writeln!(s, "  replicates   {} (seed {})", r.replicates, r.seed);
    if let Some(sigma) = r.sigma {
        let _ = writeln!(s, "  sigma        {sigma:.6}");
    }
    let _ = writeln!(s, "  T_n          {:.6}", r.t_n);
    let _ = writeln!(s, "  kappa        {:.6}", r.kappa);
    let _ = writeln!(s, "  p-value      {:.6}", r.p_value);
    let _ = writeln!(s, "  reject       {}", if r.reject { "yes" } else { "no" });
    let _ = writeln!(s, "  detected     {} intervals, {} minimal", r.intervals.len(), r.minimal_intervals.len());
    if !r.minimal_intervals.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "  {:>5} {:>5} {:>12} {:>12} {:>10} {:>9} {:>9} dir", "j", "k", "x_j", "x_k", "T_jk", "penalty", "excess");
        for iv in &r.minimal_intervals {
            let dir = match iv.direction {
                crate::calibration::Direction::Up => "+",
                crate::calibration::Direction::Down => "-",
            };
            let _ = writeln!(
                s,
                "  {:>5} {:>5} {:>12.6} {:>12.6} {:>10.4} {:>9.4} {:>9.4} {dir}",
                iv.j, iv.k, iv.x_j, iv.x_k, iv.t, iv.penalty, iv.excess
            );
        }
    }
    if let Some(ms) = r.timing_ms {
        let _ = writeln!(s, "  elapsed      {ms:.1} ms");
    }
    s
}
