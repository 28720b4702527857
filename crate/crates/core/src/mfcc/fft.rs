//! In-place iterative radix-2 Cooley-Tukey FFT.

use std::f64::consts::PI;

/// Forward DFT of `(re, im)` in place. Both slices must share one
/// power-of-two length.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len(), "fft: real/imag length mismatch");
    assert!(n.is_power_of_two(), "fft: length {n} is not a power of two");
    if n <= 1 {
        return;
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let step = -2.0 * PI / size as f64;
        for k in 0..half {
            // twiddles computed directly rather than by recurrence to keep
            // rounding error flat across large transforms
            let (w_im, w_re) = (step * k as f64).sin_cos();
            let mut start = 0;
            while start < n {
                let u = start + k;
                let v = u + half;
                let t_re = w_re * re[v] - w_im * im[v];
                let t_im = w_re * im[v] + w_im * re[v];
                re[v] = re[u] - t_re;
                im[v] = im[u] - t_im;
                re[u] += t_re;
                im[u] += t_im;
                start += size;
            }
        }
        size <<= 1;
    }
}

/// DFT of a real signal zero-padded to `n`. Returns `(re, im)`.
pub fn real_fft(signal: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(signal.len() <= n);
    let mut re = vec![0.0; n];
    re[..signal.len()].copy_from_slice(signal);
    let mut im = vec![0.0; n];
    fft_in_place(&mut re, &mut im);
    (re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_is_flat() {
        let (re, im) = real_fft(&[1.0], 8);
        assert!(re.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(im.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn length_one_is_identity() {
        let mut re = [3.5];
        let mut im = [0.25];
        fft_in_place(&mut re, &mut im);
        assert_eq!((re[0], im[0]), (3.5, 0.25));
    }

    #[test]
    #[should_panic(expected = "power of two")]
    fn non_power_of_two_panics() {
        fft_in_place(&mut [0.0; 6], &mut [0.0; 6]);
    }
}
