//! Online and offline paths of the decomposed and reorganized blocks.

use dualsep::dualpath::{DualBlock, PathSelector, Scheme};
use dualsep::layers::NormKind;
use numcore::{Graph, ParamStore, Rng, Tensor};

fn main() -> dualsep::Result<()> {
    let (channels, hidden, frames) = (8, 6, 20);
    let x = Tensor::<f64>::uniform(&[frames, 1, channels], -1.0, 1.0, &mut Rng::new(1));

    for scheme in [Scheme::Standard, Scheme::Decomposed, Scheme::Reorganized] {
        let mut store = ParamStore::new();
        let block = DualBlock::new(&mut store, "blk", scheme, channels, hidden, NormKind::Cln, &mut Rng::new(0));
        println!("{scheme}: {} parameters", block.num_params());

        let run = |b: &DualBlock, path| -> dualsep::Result<Tensor<f64>> {
            let mut g = Graph::inference(&store);
            let v = g.constant(x.clone())?;
            let y = b.forward(&mut g, v, path)?;
            Ok(g.value(y).clone())
        };
        let offline = run(&block, PathSelector::Offline)?;
        let standard = run(&block.as_standard(), PathSelector::Offline)?;
        println!("  offline vs standard rebuild: max diff {:.1e}", offline.max_abs_diff(&standard));
        match run(&block, PathSelector::Online) {
            Ok(online) => println!("  online vs offline: max diff {:.3}", online.max_abs_diff(&offline)),
            Err(e) => println!("  online path: {e}"),
        }
    }
    Ok(())
}
