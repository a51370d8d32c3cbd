"""Shared independent oracles for the test suite.

These deliberately avoid the library's own signal paths: envelope spectra
are computed with plain rectify + moving average + rfft so generator and
feature code are checked against something they do not share.
"""

import numpy as np

FD_STEP = 1e-5


def _projection_loss(layer, x, w, training, mask_seed):
    rng = np.random.default_rng(mask_seed)  # fixed stochastic state per call
    return float(np.sum(w * layer.forward(x, training=training, rng=rng)))


def fd_layer_gradients(layer, x, seed, training=False, mask_seed=1234):
    """Central finite differences of a random projection of a layer's output.

    Returns (analytic, numeric) gradient pairs for the input and every
    parameter tensor. The projection weights come from ``seed``.
    """
    rng = np.random.default_rng(seed)
    out = layer.forward(x, training=training, rng=np.random.default_rng(mask_seed))
    w = rng.normal(size=out.shape)
    layer.forward(x, training=training, rng=np.random.default_rng(mask_seed))
    analytic_dx = layer.backward(w)
    analytic_params = [g.copy() for g in layer.grads()]

    pairs = []

    def numeric_for(array):
        num = np.zeros_like(array)
        flat = array.reshape(-1)
        out_flat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = _projection_loss(layer, x, w, training, mask_seed)
            flat[i] = orig - FD_STEP
            down = _projection_loss(layer, x, w, training, mask_seed)
            flat[i] = orig
            out_flat[i] = (up - down) / (2 * FD_STEP)
        return num

    pairs.append((analytic_dx, numeric_for(x)))
    for (name, param), analytic in zip(layer.params(), analytic_params):
        pairs.append((analytic, numeric_for(param)))
    return pairs


def max_relative_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def sampled_away_from_zero(rng, shape, low=0.1, high=1.0):
    # Keeps FD probes off the ReLU/maxpool kinks.
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def layer_gradient_cases(seed):
    """(layer, input, training) triples covering every layer type."""
    from vibediag.nn_engine import Conv3x3, Dense, Dropout, Flatten, MaxPool2x2, ReLU, Softmax

    rng = np.random.default_rng(seed)
    return [
        (Conv3x3(2, 3, rng), rng.normal(size=(1, 5, 5, 2)), False),
        (Dense(7, 4, rng), rng.normal(size=(3, 7)), False),
        (MaxPool2x2(), sampled_away_from_zero(rng, (2, 4, 4, 3)), False),
        (Flatten(), rng.normal(size=(2, 3, 3, 2)), False),
        (ReLU(), sampled_away_from_zero(rng, (4, 6)), False),
        (Dropout(0.4), rng.normal(size=(3, 8)), True),
        (Softmax(), rng.normal(size=(3, 5)), False),
    ]


def envelope_spectrum(x, fs, cutoff_hz=500.0):
    """Rectified, moving-average-lowpassed envelope spectrum (freqs, mags)."""
    env = np.abs(np.asarray(x, dtype=np.float64))
    width = max(int(round(fs / cutoff_hz)), 1)
    env = np.convolve(env, np.ones(width) / width, mode="same")
    env = env - env.mean()
    mags = np.abs(np.fft.rfft(env))
    freqs = np.arange(mags.size) * fs / env.size
    return freqs, mags


def band_energy(freqs, mags, center_hz, half_width_hz=2.0):
    mask = np.abs(freqs - center_hz) <= half_width_hz
    return float(np.sum(mags[mask]))


def noise_floor(freqs, mags, lo_hz=30.0, hi_hz=150.0):
    mask = (freqs >= lo_hz) & (freqs <= hi_hz)
    return float(np.median(mags[mask]))


def detected_rates(x, fs, rates=(59.0, 87.0, 99.0)):
    """Impulse rates whose envelope line stands clear of the floor.

    The threshold adapts to the strongest line so rectification
    intermodulation products (e.g. AM sidebands) are not miscounted when
    the noise floor is very low.
    """
    freqs, mags = envelope_spectrum(x, fs)
    floor = noise_floor(freqs, mags)
    ratios = {}
    for rate in rates:
        mask = np.abs(freqs - rate) <= 2.0
        ratios[rate] = mags[mask].max() / floor
    cutoff = max(5.0, 0.15 * max(ratios.values()))
    return tuple(rate for rate in rates if ratios[rate] >= cutoff)
