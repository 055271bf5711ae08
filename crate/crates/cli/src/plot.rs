//! gnuplot output for scenario runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::Result;
use silflight::sim::ScenarioResult;

pub struct Written {
    pub files: Vec<PathBuf>,
    pub note: Option<String>,
}

/// Writes `<stem>.plot.dat` and `<stem>.gp`, then renders `<stem>.png` when
/// gnuplot is on the path.
pub fn write(res: &ScenarioResult, stem: &Path) -> Result<Written> {
    let dat = stem.with_extension("plot.dat");
    let gp = stem.with_extension("gp");
    let png = stem.with_extension("png");

    let mut data = String::from("# t roll_deg roll_ref_deg pitch_deg yaw_deg altitude_m\n");
    for r in &res.rows {
        let (roll, pitch, yaw) = r.state.euler();
        let reference = r.target.map(|t| t.roll.to_degrees()).unwrap_or(f64::NAN);
        let _ = writeln!(
            data,
            "{} {} {} {} {} {}",
            r.t,
            roll.to_degrees(),
            reference,
            pitch.to_degrees(),
            yaw.to_degrees(),
            -r.state.p.z
        );
    }
    fs::write(&dat, data)?;

    let file_name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    let script = format!(
        "set terminal pngcairo size 1000,700\n\
         set output '{png}'\n\
         set multiplot layout 2,1 title '{name}'\n\
         set ylabel 'angle (deg)'\n\
         set grid\n\
         plot '{dat}' using 1:2 with lines title 'roll', \\\n\
         \x20    '{dat}' using 1:3 with lines dashtype 2 title 'roll reference', \\\n\
         \x20    '{dat}' using 1:4 with lines title 'pitch'\n\
         set xlabel 't (s)'\n\
         set ylabel 'altitude (m)'\n\
         plot '{dat}' using 1:6 with lines title 'altitude'\n\
         unset multiplot\n",
        png = file_name(&png),
        dat = file_name(&dat),
        name = res.name,
    );
    fs::write(&gp, script)?;

    let mut files = vec![dat, gp.clone()];
    let dir = gp.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let note = match Command::new("gnuplot").arg(file_name(&gp)).current_dir(dir).status() {
        Ok(status) if status.success() => {
            files.push(png);
            None
        }
        Ok(status) => Some(format!("gnuplot exited with {status}; data and script kept")),
        Err(_) => Some("gnuplot not found; run the .gp script later to render the PNG".to_string()),
    };
    Ok(Written { files, note })
}
