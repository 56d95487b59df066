//! Cumulative layer normalization against global normalization, on a tape
//! and frame by frame.

use dualsep::layers::{cln_forward, gln_forward, ClnStream, NormParams, SequenceFeature};
use numcore::{ParamStore, Tensor};

fn main() -> dualsep::Result<()> {
    let mut store = ParamStore::<f64>::new();
    let p = NormParams::new(&mut store, "norm", 2);

    let f = SequenceFeature::new(Tensor::new(&[3, 2], vec![1.0, 3.0, 5.0, 7.0, -2.0, 4.0])?, 8.0)?;
    let cln = cln_forward(&store, &p, &f)?;
    let gln = gln_forward(&store, &p, &f)?;
    for k in 0..f.frames() {
        println!("frame {k}: input {:?} cLN {:.4?} gLN {:.4?}", f.frame(k), cln.frame(k), gln.frame(k));
    }
    println!("cLN and gLN agree on the last frame: {}", {
        let (a, b) = (cln.frame(2), gln.frame(2));
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    });

    let mut stream = ClnStream::new(&store, &p);
    for k in 0..f.frames() {
        let y = stream.push(f.frame(k))?;
        println!("streamed frame {k}: {y:.4?}");
    }
    Ok(())
}
