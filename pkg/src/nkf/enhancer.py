"""Gain-weighted combination of Wiener and LSTM estimates, trained end to end.

Per utterance the pipeline is: run the LSTM predictor on the noisy amplitude
grid, exponentiate its residual head into a prediction-residual variance,
estimate the noise variance with the feed-forward net, Wiener-filter the
noisy amplitudes with that estimate, weigh the two clean-amplitude estimates
by the gain sigma_r2 / (sigma_r2 + sigma_v2), and take the mean squared
amplitude error against the clean grid as the loss. Everything up to the
output grid is one differentiable graph; synthesis with the noisy phase
happens outside the loss path.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import data_io, signal_core, wiener
from .errors import DataError, NumericsError
from .networks import NkfModel, lstm_forward, noise_fnn_forward_grid, \
    optimizer_step, save_checkpoint


@dataclass
class NkfFrameEstimates:
    """Per-utterance inspection grids, each T x F (or None when a pipeline
    variant does not produce it)."""

    amp_lstm: np.ndarray | None
    amp_wiener: np.ndarray | None
    sigma_r2: np.ndarray | None
    sigma_v2: np.ndarray | None
    gain: np.ndarray | None
    amp_out: np.ndarray | None

    def __post_init__(self):
        if self.gain is not None and (np.any(self.gain < 0) or np.any(self.gain > 1)):
            raise DataError("gain grid must lie in [0, 1]")
        for grid in (self.amp_lstm, self.amp_wiener, self.amp_out):
            if grid is not None and np.any(grid < 0):
                raise DataError("amplitude grids must be nonnegative")


@dataclass
class EnhancementResult:
    waveform: signal_core.Waveform
    grids: NkfFrameEstimates
    clean: signal_core.Waveform | None = None
    noisy: signal_core.Waveform | None = None


@dataclass
class NkfGraph:
    """Live graph nodes from one forward pass plus the constant inputs."""

    amp_lstm: ad.DiffArray
    amp_wiener: ad.DiffArray
    sigma_r2: ad.DiffArray
    sigma_v2: ad.DiffArray
    gain: ad.DiffArray
    amp_out: ad.DiffArray
    sigma_y2: np.ndarray
    loss: ad.DiffArray | None

    def estimates(self) -> NkfFrameEstimates:
        return NkfFrameEstimates(
            amp_lstm=self.amp_lstm.values.copy(),
            amp_wiener=self.amp_wiener.values.copy(),
            sigma_r2=self.sigma_r2.values.copy(),
            sigma_v2=self.sigma_v2.values.copy(),
            gain=self.gain.values.copy(),
            amp_out=self.amp_out.values.copy(),
        )


def nkf_gain(sigma_r2, sigma_v2):
    """Weight on the Wiener estimate: residual variance vs noise variance."""
    sigma_r2 = np.asarray(sigma_r2, dtype=np.float64)
    sigma_v2 = np.asarray(sigma_v2, dtype=np.float64)
    if np.any(sigma_r2 <= 0) or np.any(sigma_v2 <= 0):
        raise DataError("gain inputs must be strictly positive")
    return sigma_r2 / (sigma_r2 + sigma_v2)


def nkf_combine(gain, amp_wiener, amp_lstm):
    """Convex per-bin combination of the two clean-amplitude estimates."""
    gain = np.asarray(gain, dtype=np.float64)
    return gain * np.asarray(amp_wiener) + (1.0 - gain) * np.asarray(amp_lstm)


def nkf_loss(amp_out, clean_amp) -> float:
    """Mean squared amplitude error over all time-frequency bins."""
    amp_out = np.asarray(amp_out, dtype=np.float64)
    clean_amp = np.asarray(clean_amp, dtype=np.float64)
    if amp_out.shape != clean_amp.shape:
        raise DataError("loss grids must share one shape")
    return float(np.mean((amp_out - clean_amp) ** 2))


def lstm_features(amplitude: np.ndarray, log_features: bool) -> np.ndarray:
    """Network input features; raw amplitudes unless the log switch is on."""
    return np.log1p(amplitude) if log_features else amplitude


def _forward_amp(m: NkfModel, noisy_amp: np.ndarray,
                 clean_amp: np.ndarray | None = None) -> NkfGraph:
    """Build the differentiable pipeline over one noisy amplitude grid."""
    noisy_amp = np.asarray(noisy_amp, dtype=np.float64)
    if noisy_amp.ndim != 2 or noisy_amp.shape[1] != m.n_bins:
        raise DataError(f"model expects T x {m.n_bins} amplitudes")
    feats = lstm_features(noisy_amp, m.log_features)
    amp_lstm, res_logvar = lstm_forward(m.predictor, feats)
    sigma_y2 = wiener.track_sigma_y(noisy_amp, m.variance_span)
    sigma_v2 = noise_fnn_forward_grid(m.noise_net, feats, sigma_y2)
    inv_sy = 1.0 / np.maximum(sigma_y2, wiener.VARIANCE_FLOOR)
    h = ad.clamp(1.0 - ad.mul(sigma_v2, ad.lift(inv_sy)), 0.0, 1.0)
    amp_wiener = ad.mul(h, ad.lift(noisy_amp))
    sigma_r2 = ad.exp(res_logvar)
    gain = ad.div(sigma_r2, ad.add(sigma_r2, sigma_v2))
    amp_out = ad.add(ad.mul(gain, amp_wiener), ad.mul(1.0 - gain, amp_lstm))
    loss = None
    if clean_amp is not None:
        clean_amp = np.asarray(clean_amp, dtype=np.float64)
        if clean_amp.shape != noisy_amp.shape:
            raise DataError("clean grid shape differs from noisy grid")
        loss = ad.mean_square(amp_out, ad.lift(clean_amp))
    return NkfGraph(amp_lstm=amp_lstm, amp_wiener=amp_wiener,
                    sigma_r2=sigma_r2, sigma_v2=sigma_v2, gain=gain,
                    amp_out=amp_out, sigma_y2=sigma_y2, loss=loss)


def nkf_forward(m: NkfModel, noisy: signal_core.Spectrogram,
                clean_amp: np.ndarray | None = None) -> NkfGraph:
    """Differentiable forward pass over a noisy spectrogram."""
    if noisy.n_bins != m.n_bins:
        raise DataError("spectrogram bin count differs from model")
    return _forward_amp(m, noisy.amplitude, clean_amp)


def estimate_noise_grid(m: NkfModel, spec: signal_core.Spectrogram) -> np.ndarray:
    """Noise-variance grid from the trained estimator (no gradient tracking)."""
    feats = lstm_features(spec.amplitude, m.log_features)
    sigma_y2 = wiener.track_sigma_y(spec.amplitude, m.variance_span)
    with ad.no_grad():
        return noise_fnn_forward_grid(m.noise_net, feats, sigma_y2).values


METHODS = ("nkf", "wiener", "lstm")


def enhance(m: NkfModel, noisy: signal_core.Waveform,
            method: str = "nkf") -> EnhancementResult:
    """Enhance one utterance; ``method`` selects the output grid."""
    if method not in METHODS:
        raise DataError(f"unknown enhancement method {method!r}")
    spec = signal_core.stft(noisy, m.window, m.hop)
    with ad.no_grad():
        graph = nkf_forward(m, spec)
    est = graph.estimates()
    amp = {"nkf": est.amp_out, "wiener": est.amp_wiener,
           "lstm": est.amp_lstm}[method]
    out_spec = signal_core.recombine(amp, spec.phase, m.window, m.hop)
    waveform = signal_core.istft(out_spec, len(noisy), noisy.sample_rate)
    return EnhancementResult(waveform=waveform, grids=est, noisy=noisy)


def enhance_wiener(noisy: signal_core.Waveform, cfg,
                   sigma_v2_grid: np.ndarray) -> EnhancementResult:
    """Instantaneous Wiener pipeline with an externally supplied noise grid.

    Used for oracle-noise ablations; no model involved.
    """
    spec = signal_core.stft(noisy, cfg.window, cfg.hop)
    sigma_v2_grid = np.asarray(sigma_v2_grid, dtype=np.float64)
    if sigma_v2_grid.shape != spec.amplitude.shape:
        raise DataError("noise grid shape differs from spectrogram")
    tracks = wiener.VarianceTracks(
        sigma_y2=wiener.track_sigma_y(spec.amplitude, cfg.variance_span),
        sigma_v2=sigma_v2_grid)
    amp = wiener.apply_wiener(spec.amplitude, tracks)
    out_spec = signal_core.recombine(amp, spec.phase, cfg.window, cfg.hop)
    waveform = signal_core.istft(out_spec, len(noisy), noisy.sample_rate)
    grids = NkfFrameEstimates(amp_lstm=None, amp_wiener=amp, sigma_r2=None,
                              sigma_v2=sigma_v2_grid, gain=None, amp_out=amp)
    return EnhancementResult(waveform=waveform, grids=grids, noisy=noisy)


def _segment_bounds(n_frames: int, seq_len: int, rng) -> tuple[int, int]:
    if n_frames <= seq_len:
        return 0, n_frames
    t0 = int(rng.integers(0, n_frames - seq_len + 1))
    return t0, t0 + seq_len


def _write_history(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, value in enumerate(history):
            writer.writerow([i, repr(value)])


def train(m: NkfModel, manifest: "data_io.CorpusManifest", cfg,
          out_dir=None, max_steps: int | None = None):
    """Minibatch training over the manifest's train split.

    Sequences longer than ``cfg.seq_len`` frames contribute one random
    truncated segment per visit (state reset per segment); gradients are
    averaged over the batch before each Adam step. Checkpoints are written
    per epoch; a non-finite loss halts training with the last good
    checkpoint still on disk.

    Returns the trained model and the per-step loss history.
    """
    entries = [e for e in manifest.entries if e.split == "train"]
    if not entries:
        raise DataError("manifest has no train entries")
    rng = np.random.default_rng(cfg.seed)
    history: list[float] = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(m, os.path.join(out_dir, "epoch000.nkf"))
    steps = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(entries))
        for lo in range(0, len(order), cfg.batch):
            batch = order[lo:lo + cfg.batch]
            m.zero_grad()
            batch_loss = 0.0
            for j in batch:
                entry = entries[int(j)]
                noisy = data_io.read_wav(entry.noisy_path)
                clean = data_io.read_wav(entry.clean_path)
                nspec = signal_core.stft(noisy, cfg.window, cfg.hop)
                cspec = signal_core.stft(clean, cfg.window, cfg.hop)
                t0, t1 = _segment_bounds(nspec.n_frames, cfg.seq_len, rng)
                graph = _forward_amp(m, nspec.amplitude[t0:t1],
                                     cspec.amplitude[t0:t1])
                loss_val = float(graph.loss.values)
                if not np.isfinite(loss_val):
                    if out_dir is not None:
                        _write_history(history, os.path.join(out_dir, "loss_history.csv"))
                    raise NumericsError("diverged: non-finite training loss")
                graph.loss.backward()
                batch_loss += loss_val
            grads = m.gradients(scale=1.0 / len(batch))
            optimizer_step(m, grads, lr=cfg.lr)
            history.append(batch_loss / len(batch))
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        if out_dir is not None:
            save_checkpoint(m, os.path.join(out_dir, f"epoch{epoch + 1:03d}.nkf"))
            _write_history(history, os.path.join(out_dir, "loss_history.csv"))
        if max_steps is not None and steps >= max_steps:
            break
    if out_dir is not None:
        save_checkpoint(m, os.path.join(out_dir, "model.nkf"))
        _write_history(history, os.path.join(out_dir, "loss_history.csv"))
    return m, history


def gradient_check(model: NkfModel | None = None, n_frames: int = 5,
                   seed: int = 0, step: float = 1e-5) -> float:
    """Compare every parameter's analytic gradient with central differences.

    Uses a tiny configuration by default so the full check stays fast;
    returns the maximum relative error over all parameter entries.
    """
    from .networks import build_model

    if model is None:
        model = build_model(4, lstm_units=(2,), fnn_hidden=8, context=3,
                            window=6, hop=3, variance_span=4, seed=seed)
    rng = np.random.default_rng(seed + 1)
    noisy_amp = rng.uniform(0.5, 3.0, (n_frames, model.n_bins))
    clean_amp = rng.uniform(0.1, 2.5, (n_frames, model.n_bins))

    model.zero_grad()
    graph = _forward_amp(model, noisy_amp, clean_amp)
    graph.loss.backward()
    analytic = {k: p.grad.copy() if p.grad is not None else np.zeros_like(p.values)
                for k, p in model.parameters().items()}

    def loss_at() -> float:
        with ad.no_grad():
            return float(_forward_amp(model, noisy_amp, clean_amp).loss.values)

    worst = 0.0
    for name, p in model.parameters().items():
        flat = p.values.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            up = loss_at()
            flat[i] = saved - step
            down = loss_at()
            flat[i] = saved
            numeric = (up - down) / (2.0 * step)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst
