//! Gnuplot-ready data files and a plotting script for a finished run.

use std::fs;
use std::path::Path;

pub const SCRIPT: &str = "plot.gp";

struct Source {
    csv: &'static str,
    dat: &'static str,
    x: &'static str,
    y: &'static str,
    transform: fn(f64, f64) -> Option<(f64, f64)>,
    plot: &'static str,
}

const SOURCES: [Source; 4] = [
    Source {
        csv: "decay.csv",
        dat: "decay.dat",
        x: "t",
        y: "w2",
        transform: |t, w| Some((t, w)),
        plot: "set logscale y\nset xlabel 't'\nset ylabel 'W2^2'\nplot 'decay.dat' using 1:2 with lines title 'W2^2'\nunset logscale y\n",
    },
    Source {
        csv: "scaling.csv",
        dat: "scaling.dat",
        x: "n",
        y: "error",
        transform: |n, e| (n > 0.0 && e > 0.0).then(|| (n.ln(), e.ln())),
        plot: "set xlabel 'log N'\nset ylabel 'log error'\nf(x) = a * x + b\nfit f(x) 'scaling.dat' using 1:2 via a, b\nplot 'scaling.dat' using 1:2 with points title 'coupling error', f(x) title sprintf('slope %.3f', a)\n",
    },
    Source {
        csv: "mass.csv",
        dat: "mass.dat",
        x: "t",
        y: "mass",
        transform: |t, m| Some((t, m)),
        plot: "set xlabel 't'\nset ylabel 'mass'\nplot 'mass.dat' using 1:2 with lines title 'mass'\n",
    },
    Source {
        csv: "confinement.csv",
        dat: "confinement.dat",
        x: "t",
        y: "mass_right",
        transform: |t, m| Some((t, m)),
        plot: "set xlabel 't'\nset ylabel 'mass right of v*'\nplot 'confinement.dat' using 1:2 with lines title 'mass right of v*'\n",
    },
];

fn column(header: &csv::StringRecord, name: &str, file: &str) -> Result<usize, String> {
    header.iter().position(|h| h == name).ok_or_else(|| format!("{file}: missing column `{name}`"))
}

fn convert(dir: &Path, src: &Source) -> Result<usize, String> {
    let path = dir.join(src.csv);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = reader.headers().map_err(|e| format!("{}: {e}", path.display()))?.clone();
    let (ix, iy) = (column(&header, src.x, src.csv)?, column(&header, src.y, src.csv)?);
    let mut out = format!("# {} {}\n", src.x, src.y);
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let parse = |i: usize| -> Result<f64, String> {
            rec.get(i).unwrap_or("").parse().map_err(|_| format!("{}: unparsable value in row {}", src.csv, rows + 1))
        };
        if let Some((x, y)) = (src.transform)(parse(ix)?, parse(iy)?) {
            out.push_str(&format!("{x:e} {y:e}\n"));
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(format!("{}: no data rows", path.display()));
    }
    fs::write(dir.join(src.dat), out).map_err(|e| e.to_string())?;
    Ok(rows)
}

/// Writes one `.dat` file per standard CSV found in `dir` and a gnuplot script
/// that plots them. Returns the names of the data files.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<String>, String> {
    if !dir.is_dir() {
        return Err(format!("{} is not a directory", dir.display()));
    }
    let mut script = String::from("set terminal pngcairo size 800,600\n");
    let mut written = vec![];
    for src in SOURCES.iter().filter(|s| dir.join(s.csv).exists()) {
        convert(dir, src)?;
        let stem = src.dat.trim_end_matches(".dat");
        script.push_str(&format!("set output '{stem}.png'\n{}reset\nset terminal pngcairo size 800,600\n", src.plot));
        written.push(src.dat.to_string());
    }
    if written.is_empty() {
        let names: Vec<&str> = SOURCES.iter().map(|s| s.csv).collect();
        return Err(format!("{} contains none of {}", dir.display(), names.join(", ")));
    }
    fs::write(dir.join(SCRIPT), script).map_err(|e| e.to_string())?;
    Ok(written)
}
