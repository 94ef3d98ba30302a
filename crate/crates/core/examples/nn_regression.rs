//! Fit a small tanh network to `sin(x)` with RMSProp.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdn::nn::{Activation, LayerSpec, Network, RmsProp};

fn main() -> tdn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let specs = [LayerSpec::new(1, 16, Activation::Tanh), LayerSpec::new(16, 1, Activation::Affine)];
    let mut net = Network::new("sine", &specs, &mut rng)?;
    let mut opt = RmsProp::new(&net, 1e-2);

    let x = Array2::from_shape_fn((256, 1), |_| rng.random_range(-3.0..3.0));
    let y = x.mapv(f64::sin);
    for epoch in 0..=2000 {
        let (out, cache) = net.forward(x.view())?;
        let err = &out - &y;
        let n = x.nrows() as f64;
        // gradient of the mean squared error
        let (grads, _) = net.backward(&cache, (&err * (2.0 / n)).view())?;
        opt.step(&mut net, &grads)?;
        if epoch % 500 == 0 {
            println!("epoch {epoch:>4}  mse {:.5}", err.mapv(|e| e * e).sum() / n);
        }
    }

    let probe = Array1::linspace(-3.0, 3.0, 7).insert_axis(ndarray::Axis(1));
    let pred = net.predict(probe.view())?;
    for (x, p) in probe.iter().zip(pred.iter()) {
        println!("sin({x:+.1}) = {:+.3}, network {p:+.3}", x.sin());
    }
    Ok(())
}
