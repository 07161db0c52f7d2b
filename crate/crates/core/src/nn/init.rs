use super::LayerParams;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Fan-in scaled normal weights, `std = sqrt(2 / (in_ch·k·k))`, zero bias.
pub fn he_normal(out_ch: usize, in_ch: usize, kernel: usize, rng: &mut SeededRng) -> LayerParams {
    let fan_in = (in_ch * kernel * kernel) as f64;
    let std = (2.0 / fan_in).sqrt();
    let shape = [out_ch, in_ch, kernel, kernel];
    let data = (0..shape.iter().product::<usize>())
        .map(|_| std * rng.normal())
        .collect();
    let weights = Tensor::from_vec(shape, data).expect("shape and data agree");
    LayerParams::from_parts(weights, vec![0.0; out_ch]).expect("bias sized to out_ch")
}
