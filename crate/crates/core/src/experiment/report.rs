//! CSV, WAV and SVG output of a sweep.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::{PointOutcome, PointSummary, ResultRow, RunOptions, Scenario, TalkerOutcome, METHOD_BASELINE, METHOD_MIXTURE};
use crate::audio_io::{write_wav, AudioBuffer, WavFormat};
use crate::stft::{synthesize, SpectrogramTensor};
use crate::{Complex64, Result};

pub const RESULTS_COLUMNS: [&str; 13] = [
    "method",
    "talker",
    "N_d",
    "N_p",
    "seed",
    "snr_gain_db",
    "sir_gain_db",
    "sinr_gain_db",
    "input_snr_db",
    "input_sir_db",
    "input_sinr_db",
    "train_s",
    "test_s",
];

pub const REGRET_COLUMNS: [&str; 14] = [
    "N_d", "N_p", "p_index", "talker", "bin", "lambda_min", "lambda_max", "delta", "p_mvdr", "p_cmvdr", "regret", "lower",
    "upper", "contained",
];

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "N_d",
    "N_p",
    "entries",
    "contained",
    "vacuous",
    "containment_rate",
    "vacuous_rate",
    "min_regret",
    "max_regret",
    "skipped",
];

type GainOf = fn(&ResultRow) -> f64;

fn num(x: f64) -> String {
    format!("{x}")
}

fn secs(x: f64) -> String {
    format!("{x:.6}")
}

pub(super) struct Writer {
    dir: PathBuf,
    regret: csv::Writer<BufWriter<File>>,
    plot: bool,
    audio: bool,
    files: Vec<PathBuf>,
}

impl Writer {
    pub(super) fn create(dir: &Path, options: &RunOptions) -> Result<Self> {
        fs::create_dir_all(dir.join("gamma"))?;
        if options.write_audio {
            fs::create_dir_all(dir.join("audio"))?;
        }
        let path = dir.join("regret.csv");
        let mut regret = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
        regret.write_record(REGRET_COLUMNS)?;
        Ok(Self { dir: dir.to_path_buf(), regret, plot: options.plot, audio: options.write_audio, files: vec![path] })
    }

    fn wav(&mut self, name: &str, sc: &Scenario, data: &[Complex64]) -> Result<()> {
        let cfg = *sc.y_test.config();
        let spec = SpectrogramTensor::from_data(1, sc.y_test.frames(), cfg, data.to_vec())?;
        let buf = AudioBuffer::new(synthesize(&spec)?, cfg.sample_rate)?;
        let path = self.dir.join("audio").join(name);
        write_wav(&path, &buf, WavFormat::Float32)?;
        self.files.push(path);
        Ok(())
    }

    pub(super) fn baseline(&mut self, sc: &Scenario, outcomes: &[TalkerOutcome]) -> Result<()> {
        if !self.audio {
            return Ok(());
        }
        let reference = sc.y_test.channel(sc.config.reference_mic).to_vec();
        self.wav("reference_mic.wav", sc, &reference)?;
        for (j, t) in outcomes.iter().enumerate() {
            self.wav(&format!("{METHOD_BASELINE}_talker{j}.wav"), sc, &t.output)?;
        }
        Ok(())
    }

    pub(super) fn point(&mut self, sc: &Scenario, point: &PointOutcome) -> Result<()> {
        let stride = sc.config.regret_bin_stride;
        for r in point.regret.iter().filter(|r| r.bin % stride == 0) {
            let e = &r.entry;
            self.regret.write_record([
                point.n_d.to_string(),
                point.n_p.to_string(),
                r.p.to_string(),
                r.talker.to_string(),
                r.bin.to_string(),
                num(e.lambda_min),
                num(e.lambda_max),
                num(e.delta),
                num(e.p_mvdr),
                num(e.p_cmvdr),
                num(e.regret),
                num(e.lower),
                num(e.upper),
                e.contained.to_string(),
            ])?;
        }
        for (j, d) in point.decisions.iter().enumerate() {
            let path = self.dir.join("gamma").join(format!("nd{:02}_talker{j}.csv", point.n_d));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["frame".to_string()];
            header.extend((0..d.bins).map(|k| format!("bin{k}")));
            w.write_record(&header)?;
            for i in 0..d.frames {
                let mut rec = vec![(sc.test.start + i).to_string()];
                rec.extend((0..d.bins).map(|k| d.gamma_at(i, k).to_string()));
                w.write_record(&rec)?;
            }
            w.flush()?;
            self.files.push(path);
        }
        if self.audio {
            for (j, t) in point.talkers.iter().enumerate() {
                self.wav(&format!("{METHOD_MIXTURE}_nd{:02}_talker{j}.wav", point.n_d), sc, &t.output)?;
            }
        }
        Ok(())
    }

    pub(super) fn finish(
        mut self,
        rows: &[ResultRow],
        points: &[PointSummary],
        failures: &[(usize, String)],
    ) -> Result<Vec<PathBuf>> {
        self.regret.flush()?;

        let path = self.dir.join("results.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(RESULTS_COLUMNS)?;
        for r in rows {
            w.write_record([
                r.method.to_string(),
                r.talker.to_string(),
                r.n_d.to_string(),
                r.n_p.to_string(),
                r.seed.to_string(),
                num(r.snr_gain_db),
                num(r.sir_gain_db),
                num(r.sinr_gain_db),
                num(r.input_snr_db),
                num(r.input_sir_db),
                num(r.input_sinr_db),
                secs(r.train_s),
                secs(r.test_s),
            ])?;
        }
        w.flush()?;
        self.files.push(path);

        let path = self.dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(SUMMARY_COLUMNS)?;
        for p in points {
            let s = &p.summary;
            w.write_record([
                p.n_d.to_string(),
                p.n_p.to_string(),
                s.count.to_string(),
                s.contained.to_string(),
                s.vacuous.to_string(),
                num(s.containment_rate()),
                num(s.vacuous_rate()),
                num(s.min_regret),
                num(s.max_regret),
                p.skipped.to_string(),
            ])?;
        }
        w.flush()?;
        self.files.push(path);

        if !failures.is_empty() {
            let path = self.dir.join("failures.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["N_d", "error"])?;
            for (n_d, msg) in failures {
                w.write_record([n_d.to_string(), msg.clone()])?;
            }
            w.flush()?;
            self.files.push(path);
        }

        if self.plot {
            fs::create_dir_all(self.dir.join("plots"))?;
            let metrics: [(&str, GainOf); 3] =
                [("snr", |r| r.snr_gain_db), ("sir", |r| r.sir_gain_db), ("sinr", |r| r.sinr_gain_db)];
            for (name, get) in metrics {
                let path = self.dir.join("plots").join(format!("{name}_gain.svg"));
                fs::write(&path, gain_plot(rows, &format!("{} gain", name.to_uppercase()), get))?;
                self.files.push(path);
            }
        }
        Ok(self.files)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Line chart of the talker-averaged mixture gain against `N_d`, with the
/// sensorspace baseline as a dashed horizontal line.
pub(super) fn gain_plot(rows: &[ResultRow], title: &str, get: GainOf) -> String {
    let mut nd: Vec<usize> = rows.iter().filter(|r| r.method == METHOD_MIXTURE).map(|r| r.n_d).collect();
    nd.sort_unstable();
    nd.dedup();
    let curve: Vec<(f64, f64)> = nd
        .iter()
        .filter_map(|&d| {
            mean(rows.iter().filter(|r| r.method == METHOD_MIXTURE && r.n_d == d).map(get)).map(|y| (d as f64, y))
        })
        .collect();
    let baseline = mean(rows.iter().filter(|r| r.method == METHOD_BASELINE).map(get));

    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 20.0, 40.0, 50.0);
    let xs: Vec<f64> = curve.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = curve.iter().map(|p| p.1).collect();
    ys.extend(baseline);
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title} vs N_d</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" stroke="black" fill="none"/>"#,
        h - bottom,
        w - right
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#, left - 6.0, sy(y) + 4.0);
    }
    for &x in &xs {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#, sx(x), h - bottom + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">N_d</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">dB</text>"#, h / 2.0, h / 2.0);
    if let Some(b) = baseline {
        let _ = writeln!(
            s,
            r#"<line x1="{left}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="6 4"/>"#,
            w - right,
            sy(b),
            sy(b)
        );
    }
    if !curve.is_empty() {
        let pts: Vec<String> = curve.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#, pts.join(" "));
        for &(x, y) in &curve {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#, sx(x), sy(y));
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" fill="steelblue">mixture</text><text x="{}" y="{}" text-anchor="end" fill="gray">sensorspace MVDR</text>"#,
        w - right,
        top,
        w - right,
        top + 14.0
    );
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
    }
}
