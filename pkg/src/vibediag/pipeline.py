"""Window-level featurization shared by the CLI and the experiment scripts."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from vibediag.band_features import extract_features
from vibediag.config import RunConfig
from vibediag.emd import sift
from vibediag.hht import render_spectrum_image
from vibediag.hybrid_model import Example, FeaturizedDataset, dataset_from_examples
from vibediag.segmentation import Window, segment
from vibediag.signal_model import Recording, load_recording


def _featurize_window(payload):
    (linear, angular, dt, start_index, recording_id, label,
     emd_cfg, hht_cfg, centers, half_width, squared, taper) = payload
    modes = sift(linear, emd_cfg)
    image = render_spectrum_image(
        modes, dt,
        freq_max_hz=hht_cfg.freq_max_hz,
        channels=hht_cfg.channels,
        log_compress=hht_cfg.log_compress,
        recording_id=recording_id,
        start_index=start_index,
        label=label,
    )
    pair = extract_features(angular, 1.0 / dt, centers_hz=centers,
                            half_width_hz=half_width, squared=squared, taper=taper)
    return image, pair


def featurize_windows(windows: Sequence[Window], config: RunConfig, jobs: int = 1) -> list[Example]:
    """Images plus raw band-power features for each window, input order kept."""
    payloads = [
        (
            w.linear, w.angular, w.dt, w.start_index, w.recording_id, w.label,
            config.emd, config.hht, tuple(config.band.centers_hz),
            config.band.half_width_hz, config.band.squared, config.band.taper,
        )
        for w in windows
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_featurize_window, payloads, chunksize=8))
    else:
        results = [_featurize_window(p) for p in payloads]
    return [
        Example(image=image, features=pair, label=w.label,
                recording_id=w.recording_id, start_index=w.start_index)
        for w, (image, pair) in zip(windows, results)
    ]


def featurize_recordings(recordings: Sequence[Recording], config: RunConfig,
                         jobs: int = 1, seed: int | None = None) -> FeaturizedDataset:
    windows: list[Window] = []
    for rec in recordings:
        windows.extend(
            segment(rec, config.segmentation.window_len, config.segmentation.hop,
                    config.segmentation.linear_channel)
        )
    if not windows:
        raise ValueError("no windows produced; recordings shorter than one window?")
    examples = featurize_windows(windows, config, jobs=jobs)
    from vibediag.config import config_to_dict

    echo = config_to_dict(config)
    return dataset_from_examples(examples, config_echo=echo, seed=seed)


def load_recordings_dir(directory: str | Path) -> list[Recording]:
    directory = Path(directory)
    paths = sorted(directory.glob("*.csv"))
    if not paths:
        raise FileNotFoundError(f"no recording CSV files in {directory}")
    return [load_recording(p) for p in paths]
