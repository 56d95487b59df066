//! SI-SDR, SNR-based SDR and permutation-invariant scoring.

use dualsep::metrics::{score_utterance, sdr, si_sdr};
use dualsep::training::{neg_snr_matrix, pit_loss};
use numcore::Rng;

fn main() -> dualsep::Result<()> {
    let mut rng = Rng::new(0);
    let s1: Vec<f64> = (0..800).map(|n| (n as f64 * 0.05).sin()).collect();
    let s2: Vec<f64> = (0..800).map(|_| rng.uniform(-0.5, 0.5)).collect();
    let mix: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();

    println!("mixture vs s1: SI-SDR {:.2} dB, SDR {:.2} dB", si_sdr(&mix, &s1)?, sdr(&mix, &s1)?);
    let scaled: Vec<f64> = s1.iter().map(|v| 10.0 * v).collect();
    println!("10 x s1 vs s1: SI-SDR {:.2} dB (clamped), SDR {:.2} dB", si_sdr(&scaled, &s1)?, sdr(&scaled, &s1)?);

    let noisy = |x: &[f64], rng: &mut Rng| -> Vec<f64> { x.iter().map(|v| v + rng.uniform(-0.05, 0.05)).collect() };
    let ests = vec![noisy(&s2, &mut rng), noisy(&s1, &mut rng)];
    let refs = vec![s1.clone(), s2.clone()];
    let m = neg_snr_matrix(&ests, &refs)?;
    let (loss, perm) = pit_loss(&m)?;
    println!("loss matrix {m:.2?}\nbest assignment {perm:?}, mean loss {loss:.2} dB");

    let u = score_utterance(0, &ests, &refs, &mix)?;
    println!("SI-SDRi per source {:.2?} dB, permutation {:?}", u.si_sdri, u.permutation);
    Ok(())
}
