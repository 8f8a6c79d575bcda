//! Forward and backward kernels of the fixed layer set. Activations are
//! plain slices; shapes are passed explicitly.

/// 3x3 convolution, stride 1, zero "same" padding, followed by ReLU.
///
/// `input` is `[c_in][h][w]`, `weight` is `[c_out][c_in][3][3]`; returns
/// the post-ReLU output `[c_out][h][w]`.
pub fn conv3x3_relu_forward(input: &[f64], c_in: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let c_out = bias.len();
    let plane = h * w;
    let mut out = vec![0.0; c_out * plane];
    for o in 0..c_out {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..c_in {
            let src = &input[c * plane..(c + 1) * plane];
            let kernel = &weight[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = kernel[ky * 3 + kx];
                    // output x receives input x + kx - 1
                    let (x0, x1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let drow = &mut dst[y * w..(y + 1) * w];
                        for x in x0..x1 {
                            drow[x] += k * srow[x + kx - 1];
                        }
                    }
                }
            }
        }
        dst.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    out
}

/// Backward of [`conv3x3_relu_forward`]. `output` is the post-ReLU
/// activation. Accumulates into `d_weight`/`d_bias` and returns the input
/// gradient when `need_input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_relu_backward(
    input: &[f64],
    output: &[f64],
    d_output: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let c_out = d_bias.len();
    let plane = h * w;
    let d_pre: Vec<f64> = d_output.iter().zip(output).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect();
    let mut d_input = if need_input_grad { vec![0.0; c_in * plane] } else { Vec::new() };
    for o in 0..c_out {
        let g = &d_pre[o * plane..(o + 1) * plane];
        d_bias[o] += g.iter().sum::<f64>();
        for c in 0..c_in {
            let src = &input[c * plane..(c + 1) * plane];
            let base = (o * c_in + c) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let (x0, x1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    let mut acc = 0.0;
                    let k = weight[base + ky * 3 + kx];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let grow = &g[y * w..(y + 1) * w];
                        let srow = &src[sy * w..(sy + 1) * w];
                        for x in x0..x1 {
                            acc += grow[x] * srow[x + kx - 1];
                        }
                        if need_input_grad {
                            let drow = &mut d_input[c * plane + sy * w..c * plane + (sy + 1) * w];
                            for x in x0..x1 {
                                drow[x + kx - 1] += k * grow[x];
                            }
                        }
                    }
                    d_weight[base + ky * 3 + kx] += acc;
                }
            }
        }
    }
    need_input_grad.then_some(d_input)
}

/// 2x2 max pooling with stride 2 (floor). Returns the pooled output and,
/// for every output cell, the flat input index of its maximum (first
/// occurrence wins ties).
pub fn maxpool2_forward(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = ch * h * w + 2 * y * w + 2 * x;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}

/// Routes each output gradient to its argmax input position.
pub fn maxpool2_backward(d_output: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut d_input = vec![0.0; input_len];
    for (g, &i) in d_output.iter().zip(argmax) {
        d_input[i] += g;
    }
    d_input
}

/// `weight` is `[out][in]` row-major.
pub fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + weight[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub fn dense_backward(input: &[f64], d_output: &[f64], weight: &[f64], d_weight: &mut [f64], d_bias: &mut [f64]) -> Vec<f64> {
    let n_in = input.len();
    let mut d_input = vec![0.0; n_in];
    for (o, &g) in d_output.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        d_bias[o] += g;
        let row = o * n_in..(o + 1) * n_in;
        d_weight[row.clone()].iter_mut().zip(input).for_each(|(dw, x)| *dw += g * x);
        d_input.iter_mut().zip(&weight[row]).for_each(|(dx, w)| *dx += g * w);
    }
    d_input
}

pub fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Inverted-dropout mask: each unit survives with probability `1 - p` and
/// is scaled by `1 / (1 - p)`. `p = 0` yields all ones.
pub fn dropout_mask<R: rand::Rng>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    if p <= 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

/// Dropout forward and backward are the same element-wise product.
pub fn apply_mask(v: &[f64], mask: &[f64]) -> Vec<f64> {
    v.iter().zip(mask).map(|(a, m)| a * m).collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of softmax probabilities against a target class, and the
/// gradient with respect to the logits (`p - onehot`).
pub fn softmax_xent(probs: &[f64], target: usize) -> (f64, Vec<f64>) {
    let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
    let mut grad = probs.to_vec();
    grad[target] -= 1.0;
    (loss, grad)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one LSTM layer over a sequence, kept for BPTT.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    hidden: usize,
    /// `[x_t; h_{t-1}]` per step.
    joined: Vec<Vec<f64>>,
    /// Gate activations `i, f, g, o` per step, `4 * hidden` each.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    /// Hidden states `h_1..h_T`.
    pub outputs: Vec<Vec<f64>>,
}

/// Runs an LSTM layer. `weight` is `[4H][I+H]` with gate blocks in the
/// order input, forget, cell, output; `bias` is `[4H]`.
pub fn lstm_forward(inputs: &[Vec<f64>], hidden: usize, weight: &[f64], bias: &[f64]) -> LstmCache {
    let steps = inputs.len();
    let width = inputs.first().map_or(0, |x| x.len()) + hidden;
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut cache = LstmCache {
        steps,
        hidden,
        joined: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        cells: Vec::with_capacity(steps),
        outputs: Vec::with_capacity(steps),
    };
    for x in inputs {
        let mut joined = Vec::with_capacity(width);
        joined.extend_from_slice(x);
        joined.extend_from_slice(&h);
        let mut z = dense_forward(&joined, weight, bias);
        for j in 0..hidden {
            z[j] = sigmoid(z[j]);
            z[hidden + j] = sigmoid(z[hidden + j]);
            z[2 * hidden + j] = z[2 * hidden + j].tanh();
            z[3 * hidden + j] = sigmoid(z[3 * hidden + j]);
            c[j] = z[hidden + j] * c[j] + z[j] * z[2 * hidden + j];
            h[j] = z[3 * hidden + j] * c[j].tanh();
        }
        cache.joined.push(joined);
        cache.gates.push(z);
        cache.cells.push(c.clone());
        cache.outputs.push(h.clone());
    }
    cache
}

/// Backpropagation through time. `d_outputs[t]` is the loss gradient
/// flowing into `h_t` from above. Returns the gradient of every input step.
pub fn lstm_backward(cache: &LstmCache, d_outputs: &[Vec<f64>], weight: &[f64], d_weight: &mut [f64], d_bias: &mut [f64]) -> Vec<Vec<f64>> {
    let hidden = cache.hidden;
    let n_in = cache.joined.first().map_or(hidden, |j| j.len()) - hidden;
    let mut d_inputs = vec![Vec::new(); cache.steps];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let zeros = vec![0.0; hidden];
    for t in (0..cache.steps).rev() {
        let gates = &cache.gates[t];
        let c = &cache.cells[t];
        let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zeros };
        let mut dz = vec![0.0; 4 * hidden];
        for j in 0..hidden {
            let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
            let tc = c[j].tanh();
            let dh = d_outputs[t][j] + dh_next[j];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[hidden + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * hidden + j] = dc * i * (1.0 - g * g);
            dz[3 * hidden + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let d_joined = dense_backward(&cache.joined[t], &dz, weight, d_weight, d_bias);
        dh_next.copy_from_slice(&d_joined[n_in..]);
        d_inputs[t] = d_joined[..n_in].to_vec();
    }
    d_inputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, &[]);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central-difference derivative of `f` with respect to `x[i]`.
    fn numeric(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let h = 1e-5;
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    fn close(analytic: f64, numeric: f64) -> bool {
        (analytic - numeric).abs() <= 1e-6 + 1e-5 * analytic.abs().max(numeric.abs())
    }

    #[test]
    fn conv_matches_direct_sum() {
        let (c_in, h, w, c_out) = (2, 5, 4, 3);
        let x = random(c_in * h * w, 1);
        let k = random(c_out * c_in * 9, 2);
        let b = random(c_out, 3);
        let y = conv3x3_relu_forward(&x, c_in, h, w, &k, &b);
        for o in 0..c_out {
            for yy in 0..h {
                for xx in 0..w {
                    let mut s = b[o];
                    for c in 0..c_in {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (yy as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    s += k[((o * c_in + c) * 3 + ky) * 3 + kx] * x[(c * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    assert!((y[(o * h + yy) * w + xx] - s.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_gradients() {
        let (c_in, h, w) = (2, 4, 3);
        let x = random(c_in * h * w, 4);
        let k = random(2 * c_in * 9, 5);
        let b = vec![0.1, -0.05];
        let proj = random(2 * h * w, 6);
        let loss = |x: &[f64], k: &[f64], b: &[f64]| {
            conv3x3_relu_forward(x, c_in, h, w, k, b).iter().zip(&proj).map(|(a, p)| a * p).sum::<f64>()
        };
        let y = conv3x3_relu_forward(&x, c_in, h, w, &k, &b);
        let mut dk = vec![0.0; k.len()];
        let mut db = vec![0.0; 2];
        let dx = conv3x3_relu_backward(&x, &y, &proj, c_in, h, w, &k, &mut dk, &mut db, true).unwrap();
        for i in 0..x.len() {
            assert!(close(dx[i], numeric(&|v| loss(v, &k, &b), &x, i)));
        }
        for i in 0..k.len() {
            assert!(close(dk[i], numeric(&|v| loss(&x, v, &b), &k, i)));
        }
        for i in 0..2 {
            assert!(close(db[i], numeric(&|v| loss(&x, &k, v), &b, i)));
        }
    }

    #[test]
    fn pool_routes_to_first_maximum() {
        let x = vec![1.0, 3.0, 3.0, 0.0, 2.0, 1.0, /* row 2 */ 5.0, 5.0, 0.0, 0.0, 9.0, 9.0];
        let (y, arg) = maxpool2_forward(&x, 1, 2, 6);
        assert_eq!(y, vec![5.0, 3.0, 9.0]);
        assert_eq!(arg, vec![6, 2, 10]);
        let g = maxpool2_backward(&[1.0, 2.0, 3.0], &arg, x.len());
        assert_eq!(g.iter().sum::<f64>(), 6.0);
        assert_eq!((g[6], g[2], g[10]), (1.0, 2.0, 3.0));
    }

    #[test]
    fn dense_gradients() {
        let x = random(5, 7);
        let wt = random(15, 8);
        let b = random(3, 9);
        let proj = [0.3, -1.2, 0.7];
        let loss = |x: &[f64], w: &[f64]| dense_forward(x, w, &b).iter().zip(&proj).map(|(a, p)| a * p).sum::<f64>();
        let mut dw = vec![0.0; 15];
        let mut db = vec![0.0; 3];
        let dx = dense_backward(&x, &proj, &wt, &mut dw, &mut db);
        assert_eq!(db, proj.to_vec());
        for i in 0..5 {
            assert!(close(dx[i], numeric(&|v| loss(v, &wt), &x, i)));
        }
        for i in 0..15 {
            assert!(close(dw[i], numeric(&|v| loss(&x, v), &wt, i)));
        }
    }

    #[test]
    fn dropout_preserves_expectation_and_gradient() {
        let mut rng = crate::rng::stream(3, &[]);
        let mask = dropout_mask(200_000, 0.3, &mut rng);
        let mean = mask.iter().sum::<f64>() / mask.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert!(dropout_mask(10, 0.0, &mut rng).iter().all(|&m| m == 1.0));
        let x = random(8, 40);
        let m = dropout_mask(8, 0.5, &mut rng);
        let proj = random(8, 41);
        let f = |v: &[f64]| apply_mask(v, &m).iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>();
        let analytic = apply_mask(&proj, &m);
        for i in 0..8 {
            assert!(close(analytic[i], numeric(&f, &x, i)));
        }
    }

    #[test]
    fn softmax_xent_gradient_is_p_minus_y() {
        let z = [0.5, -1.0, 2.0, 0.0];
        let p = softmax(&z);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (loss, g) = softmax_xent(&p, 2);
        assert!(loss >= 0.0);
        for i in 0..4 {
            let expected = p[i] - if i == 2 { 1.0 } else { 0.0 };
            assert!((g[i] - expected).abs() < 1e-15);
            let f = |v: &[f64]| softmax_xent(&softmax(v), 2).0;
            assert!(close(g[i], numeric(&f, &z, i)));
        }
    }

    #[test]
    fn lstm_gradients_through_time() {
        let (steps, n_in, hidden) = (5, 3, 4);
        let xs: Vec<Vec<f64>> = (0..steps).map(|t| random(n_in, 10 + t as u64)).collect();
        let wt: Vec<f64> = random(4 * hidden * (n_in + hidden), 20);
        let b = random(4 * hidden, 21);
        let proj: Vec<Vec<f64>> = (0..steps).map(|t| random(hidden, 30 + t as u64)).collect();
        let loss = |xs: &[Vec<f64>], w: &[f64], b: &[f64]| {
            lstm_forward(xs, hidden, w, b)
                .outputs
                .iter()
                .zip(&proj)
                .map(|(h, p)| h.iter().zip(p).map(|(a, b)| a * b).sum::<f64>())
                .sum::<f64>()
        };
        let cache = lstm_forward(&xs, hidden, &wt, &b);
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; b.len()];
        let dx = lstm_backward(&cache, &proj, &wt, &mut dw, &mut db);
        for i in 0..wt.len() {
            assert!(close(dw[i], numeric(&|v| loss(&xs, v, &b), &wt, i)), "weight {i}");
        }
        for i in 0..b.len() {
            assert!(close(db[i], numeric(&|v| loss(&xs, &wt, v), &b, i)), "bias {i}");
        }
        for t in 0..steps {
            for i in 0..n_in {
                let f = |v: &[f64]| {
                    let mut xs2 = xs.clone();
                    xs2[t] = v.to_vec();
                    loss(&xs2, &wt, &b)
                };
                assert!(close(dx[t][i], numeric(&f, &xs[t], i)), "input {t},{i}");
            }
        }
    }
}
