use std::path::{Path, PathBuf};

use super::sweeps::{SweepKind, SweepReport};
use crate::{Error, Result};

/// Files written by [`emit_outputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPaths {
    pub json: PathBuf,
    /// One row per attempted point, failures included.
    pub points_csv: PathBuf,
    /// Whitespace-separated plot data.
    pub plot: PathBuf,
    /// Per-wavelength rows plus a totals row (WDM sweeps only).
    pub channels_csv: Option<PathBuf>,
    pub taps: Vec<PathBuf>,
}

fn header(report: &SweepReport) -> String {
    format!(
        "# ccmcf {} config_hash={} seed={}\n",
        report.kind.name(),
        report.config_hash,
        report.seed
    )
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn points_csv(report: &SweepReport, path: &Path) -> Result<Vec<u8>> {
    let modes = report.config.link.modes;
    let mut w = csv::Writer::from_writer(header(report).into_bytes());
    let mut cols: Vec<String> = [
        "spans",
        "trial",
        "slot",
        "status",
        "length_km",
        "center_freq_hz",
        "tau_m_ns",
        "link_tau_m_ns",
        "sigma_rms_db",
        "link_sigma_rms_db",
        "gmi_2d",
        "ngmi",
        "code_rate",
        "net_rate_tbps",
        "achievable_rate_tbps",
        "min_residual_snr_db",
        "cpr_phase_var",
    ]
    .map(String::from)
    .to_vec();
    cols.extend((0..modes).map(|c| format!("gmi_c{c}")));
    w.write_record(&cols).map_err(|e| csv_error(path, e))?;

    // (spans, slot, trial) key; successes and failures are merged back into
    // sweep order
    type Row = ((usize, Option<usize>, usize), Vec<String>);
    let mut rows: Vec<Row> = Vec::new();
    for p in &report.points {
        let mut r = vec![
            p.spans.to_string(),
            p.trial.to_string(),
            p.slot.map_or_else(String::new, |s| s.to_string()),
            "ok".into(),
            p.length_km.to_string(),
            p.center_freq_hz.to_string(),
            p.tau_m_ns.to_string(),
            p.link_tau_m_ns.to_string(),
            p.sigma_rms_db.to_string(),
            p.link_sigma_rms_db.to_string(),
            p.gmi_2d.to_string(),
            p.ngmi.to_string(),
            opt(p.code_rate),
            p.net_rate_tbps.to_string(),
            p.achievable_rate_tbps.to_string(),
            p.residual_snr_db.iter().copied().fold(f64::INFINITY, f64::min).to_string(),
            p.cpr_phase_var.to_string(),
        ];
        r.extend(p.gmi.iter().map(|g| g.to_string()));
        rows.push(((p.spans, p.slot, p.trial), r));
    }
    for f in &report.failures {
        let mut r = vec![
            f.spans.to_string(),
            f.trial.to_string(),
            f.slot.map_or_else(String::new, |s| s.to_string()),
            format!("failed: {}", f.error),
        ];
        r.resize(cols.len(), String::new());
        rows.push(((f.spans, f.slot, f.trial), r));
    }
    let order = |k: &(usize, Option<usize>, usize)| {
        let (spans, slot, trial) = *k;
        let i = report.config.run.spans.iter().position(|&s| s == spans).unwrap_or(0);
        match report.kind {
            SweepKind::Distance => (i, 0, trial),
            SweepKind::Wdm => {
                let i = report.config.run.wdm_spans.iter().position(|&s| s == spans).unwrap_or(0);
                (i, slot.unwrap_or(0), trial)
            }
            SweepKind::Stability => (0, 0, trial),
        }
    };
    rows.sort_by_key(|(k, _)| order(k));
    for (_, r) in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

fn channels_csv(report: &SweepReport, path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(header(report).into_bytes());
    w.write_record([
        "spans",
        "slot",
        "source_slot",
        "center_freq_hz",
        "gmi_2d",
        "ngmi",
        "code_rate",
        "net_rate_tbps",
        "achievable_rate_tbps",
    ])
    .map_err(|e| csv_error(path, e))?;
    for t in &report.wdm {
        for (i, (row, src)) in t.report.per_wdm_channel.iter().zip(&t.source_slot).enumerate() {
            w.write_record([
                t.spans.to_string(),
                i.to_string(),
                src.to_string(),
                row.center_freq_hz.to_string(),
                row.gmi_2d.to_string(),
                row.ngmi.to_string(),
                opt(row.code_rate),
                row.net_rate_tbps.to_string(),
                row.achievable_rate_tbps.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.write_record([
            t.spans.to_string(),
            "total".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            t.total_net_tbps.to_string(),
            t.total_achievable_tbps.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

fn plot_data(report: &SweepReport) -> String {
    let mut s = header(report);
    match report.kind {
        SweepKind::Distance => {
            if let Some(f) = &report.distance_fit {
                s.push_str(&format!(
                    "# a_ps_per_sqrt_km={} exponent={} r2={} sigma_g_db={}\n",
                    f.a_ps_per_sqrt_km, f.power_law.exponent, f.power_law.r_squared, f.sigma_g_db
                ));
            }
            s.push_str("# spans length_km tau_m_ns link_tau_m_ns sigma_rms_db link_sigma_rms_db\n");
            for p in &report.points {
                s.push_str(&format!(
                    "{} {} {} {} {} {}\n",
                    p.spans, p.length_km, p.tau_m_ns, p.link_tau_m_ns, p.sigma_rms_db, p.link_sigma_rms_db
                ));
            }
        }
        SweepKind::Wdm => {
            // one gnuplot data block (index) per span count
            for (i, t) in report.wdm.iter().enumerate() {
                if i > 0 {
                    s.push_str("\n\n");
                }
                s.push_str(&format!(
                    "# spans={} band_hz={} total_net_tbps={} total_achievable_tbps={}\n",
                    t.spans, t.band_hz, t.total_net_tbps, t.total_achievable_tbps
                ));
                s.push_str("# slot center_freq_thz net_rate_tbps achievable_rate_tbps gmi_2d\n");
                for (k, r) in t.report.per_wdm_channel.iter().enumerate() {
                    s.push_str(&format!(
                        "{} {} {} {} {}\n",
                        k,
                        r.center_freq_hz / 1e12,
                        r.net_rate_tbps,
                        r.achievable_rate_tbps,
                        r.gmi_2d
                    ));
                }
            }
        }
        SweepKind::Stability => {
            if let Some(st) = &report.stability {
                s.push_str(&format!(
                    "# tau_m_mean_ns={} tau_m_std_ns={} sigma_rms_mean_db={} sigma_rms_std_db={}\n",
                    st.tau_m_mean_ns, st.tau_m_std_ns, st.sigma_rms_mean_db, st.sigma_rms_std_db
                ));
            }
            s.push_str("# trial tau_m_ns sigma_rms_db link_tau_m_ns link_sigma_rms_db\n");
            for p in &report.points {
                s.push_str(&format!(
                    "{} {} {} {} {}\n",
                    p.trial, p.tau_m_ns, p.sigma_rms_db, p.link_tau_m_ns, p.link_sigma_rms_db
                ));
            }
        }
    }
    s
}

/// Write the JSON report, the per-point CSV, plot data and (WDM) the
/// per-wavelength CSV into `dir`, plus tap dumps when present. Every text
/// file starts with a `# ccmcf <kind> config_hash=.. seed=..` line; nothing
/// time-dependent is written, so identical runs give identical files.
pub fn emit_outputs(report: &SweepReport, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = report.kind.name();
    let json = dir.join(format!("{name}.json"));
    let body = serde_json::to_string_pretty(report).map_err(|e| Error::Domain(format!("report: {e}")))?;
    write(&json, body.as_bytes())?;

    let points_path = dir.join(format!("{name}_points.csv"));
    write(&points_path, &points_csv(report, &points_path)?)?;

    let plot = dir.join(format!("{name}.dat"));
    write(&plot, plot_data(report).as_bytes())?;

    let channels = if report.kind == SweepKind::Wdm {
        let p = dir.join("wdm_channels.csv");
        write(&p, &channels_csv(report, &p)?)?;
        Some(p)
    } else {
        None
    };

    let mut taps = Vec::new();
    if !report.taps.is_empty() {
        let tdir = dir.join("taps");
        std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for (file, dump) in &report.taps {
            let p = tdir.join(file);
            dump.write(&p)?;
            taps.push(p);
        }
    }
    Ok(OutputPaths {
        json,
        points_csv: points_path,
        plot,
        channels_csv: channels,
        taps,
    })
}

pub fn read_report(path: &Path) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))
}
