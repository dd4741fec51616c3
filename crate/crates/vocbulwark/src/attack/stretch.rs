//! Phase-vocoder time-scale modification (pitch-preserving).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{hann_periodic, Waveform};

const FFT: usize = 1024;
const HOP: usize = 256;

fn princarg(phase: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    phase - two_pi * (phase / two_pi).round()
}

/// Change playback speed by `factor` (0.9 slows down, 1.1 speeds up) without
/// moving pitch. Output length lands within one hop of `len / factor`.
pub fn time_stretch(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(Error::Attack(format!("time_stretch factor {factor} outside [0.5, 2]")));
    }
    if w.len() < FFT + HOP {
        return Err(Error::Attack(format!("time_stretch: input {} too short", w.len())));
    }
    let window: Vec<f64> = hann_periodic(FFT).into_iter().map(|v| v as f64).collect();
    let fwd = FftPlanner::<f64>::new().plan_fft_forward(FFT);
    let inv = FftPlanner::<f64>::new().plan_fft_inverse(FFT);
    let bins = FFT / 2 + 1;

    let analysis_at = |pos: usize, buf: &mut Vec<Complex<f64>>| {
        buf.clear();
        buf.extend((0..FFT).map(|j| Complex::new(w.samples[pos + j] as f64 * window[j], 0.0)));
        fwd.process(buf);
    };

    let n_out_frames = ((w.len() - FFT) as f64 / (HOP as f64 * factor)).floor() as usize + 1;
    let out_len = (w.len() as f64 / factor).round() as usize;
    let mut out = vec![0.0f64; out_len + FFT];
    let mut norm = vec![0.0f64; out_len + FFT];

    let mut buf = Vec::with_capacity(FFT);
    let mut prev_phase = vec![0.0f64; bins];
    let mut synth_phase = vec![0.0f64; bins];
    let mut prev_pos = 0usize;

    for j in 0..n_out_frames {
        let pos = ((j as f64 * HOP as f64 * factor).round() as usize).min(w.len() - FFT);
        analysis_at(pos, &mut buf);
        let mut mags = vec![0.0f64; bins];
        let mut phases = vec![0.0f64; bins];
        for k in 0..bins {
            mags[k] = buf[k].norm();
            phases[k] = buf[k].arg();
        }
        if j == 0 {
            synth_phase.copy_from_slice(&phases);
        } else {
            let dt = (pos - prev_pos).max(1) as f64;
            for k in 0..bins {
                let omega = std::f64::consts::TAU * k as f64 / FFT as f64;
                let deviation = princarg(phases[k] - prev_phase[k] - omega * dt) / dt;
                synth_phase[k] += (omega + deviation) * HOP as f64;
            }
        }
        prev_phase.copy_from_slice(&phases);
        prev_pos = pos;

        // rebuild the frame from magnitude and propagated phase
        for k in 0..bins {
            buf[k] = Complex::from_polar(mags[k], synth_phase[k]);
        }
        for k in bins..FFT {
            buf[k] = buf[FFT - k].conj();
        }
        inv.process(&mut buf);
        let off = j * HOP;
        for i in 0..FFT {
            if off + i < out.len() {
                let s = buf[i].re / FFT as f64;
                out[off + i] += s * window[i];
                norm[off + i] += window[i] * window[i];
            }
        }
    }

    let samples: Vec<f32> = out
        .iter()
        .zip(&norm)
        .take(out_len)
        .map(|(&v, &n)| if n > 1e-9 { (v / n) as f32 } else { 0.0 })
        .collect();
    Ok(Waveform { samples, sample_rate: w.sample_rate })
}
