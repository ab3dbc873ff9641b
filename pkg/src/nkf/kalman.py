"""Conventional modulation-domain Kalman filtering of amplitude tracks.

Each frequency bin's amplitude trajectory is treated as a P-order linear
prediction process; the filter alternates the companion-form prediction
step with a scalar-observation update whose gain compares the propagated
prediction-error covariance against the noise variance. The full baseline
enhancer Wiener-prefilters the noisy amplitudes, fits LP models on short
segments of that output, then runs the recursion over the raw noisy
amplitudes and resynthesizes with the noisy phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import signal_core, wiener
from .errors import DataError, NumericsError
from .linear_prediction import LpModel, TransitionMatrix, autocorrelate, \
    levinson_durbin, transition_matrix

#: Autocorrelation floor below which a segment is treated as silence.
_SILENT_R0 = 1e-14


@dataclass
class KfState:
    """Per-bin filter state: amplitude state vector and error covariance."""

    x: np.ndarray
    ree: np.ndarray
    trans: TransitionMatrix
    sigma_w2: float

    @property
    def amplitude(self) -> float:
        """Current clean-amplitude estimate, clamped at zero."""
        return max(0.0, float(self.x[0]))


@dataclass(frozen=True)
class KfGain:
    g: np.ndarray


def kf_predict(s: KfState) -> KfState:
    """Propagate state and covariance one frame ahead."""
    a = s.trans.a
    x = a @ s.x
    ree = a @ s.ree @ a.T
    ree[0, 0] += s.sigma_w2
    ree = 0.5 * (ree + ree.T)
    return KfState(x=x, ree=ree, trans=s.trans, sigma_w2=s.sigma_w2)


def kf_gain(s_pred: KfState, sigma_v2: float) -> KfGain:
    """Gain that weighs the noisy observation against the prediction."""
    if sigma_v2 < 0:
        raise DataError("noise variance must be nonnegative")
    denom = sigma_v2 + s_pred.ree[0, 0]
    if denom <= 0:
        raise NumericsError("degenerate gain: zero residual and noise variance")
    return KfGain(g=s_pred.ree[:, 0] / denom)


def kf_update(s_pred: KfState, g: KfGain, y_amp: float) -> KfState:
    """Fold the observed amplitude into the predicted state.

    The update is linear and accepts any real observation; amplitude
    pipelines only ever pass nonnegative values.
    """
    x = s_pred.x + g.g * (y_amp - s_pred.x[0])
    ree = s_pred.ree - np.outer(g.g, s_pred.ree[0, :])
    return KfState(x=x, ree=ree, trans=s_pred.trans, sigma_w2=s_pred.sigma_w2)


def run_kf(noisy_amp: np.ndarray, lp: LpModel, sigma_v2: np.ndarray) -> np.ndarray:
    """Filter one amplitude track with a single LP model.

    The state is seeded from the first P noisy amplitudes (newest first) with
    covariance sigma_v2[0] * I; those frames pass through unchanged.
    """
    noisy_amp = np.asarray(noisy_amp, dtype=np.float64)
    sigma_v2 = np.asarray(sigma_v2, dtype=np.float64)
    if noisy_amp.shape != sigma_v2.shape or noisy_amp.ndim != 1:
        raise DataError("amplitude and noise-variance tracks must match")
    p = lp.order
    out = noisy_amp.copy()
    if len(noisy_amp) <= p:
        return out
    state = KfState(
        x=noisy_amp[:p][::-1].copy(),
        ree=sigma_v2[0] * np.eye(p),
        trans=transition_matrix(lp),
        sigma_w2=lp.residual_var,
    )
    for t in range(p, len(noisy_amp)):
        state = kf_predict(state)
        gain = kf_gain(state, sigma_v2[t])
        state = kf_update(state, gain, noisy_amp[t])
        out[t] = state.amplitude
    return out


def _segment_model(track_segment: np.ndarray, order: int) -> LpModel:
    """LP fit for one segment; silent segments degrade to a white model."""
    if len(track_segment) <= order:
        raise DataError("segment too short for LP analysis")
    r = autocorrelate(track_segment, order)
    if r[0] <= _SILENT_R0:
        return LpModel(order=order, coeffs=np.zeros(order),
                       residual_var=max(float(r[0]), 0.0))
    return levinson_durbin(r, order)


def _run_kf_segmented(noisy_track, wiener_track, sigma_v2_track,
                      order: int, seg_len: int):
    """KF over one bin with per-segment LP models fit on the Wiener output.

    Returns the enhanced track and the first gain component per frame.
    State and covariance carry across segment boundaries; only the
    transition matrix and residual variance are refreshed.
    """
    n = len(noisy_track)
    out = noisy_track.copy()
    gains = np.zeros(n)
    if n <= order:
        return out, gains
    starts = list(range(0, n, seg_len))
    # merge a tail too short for LP analysis into the previous segment
    if len(starts) > 1 and n - starts[-1] <= order:
        starts.pop()
    state = KfState(
        x=noisy_track[:order][::-1].copy(),
        ree=sigma_v2_track[0] * np.eye(order),
        trans=transition_matrix(LpModel(order, np.zeros(order), 0.0)),
        sigma_w2=0.0,
    )
    for si, start in enumerate(starts):
        stop = starts[si + 1] if si + 1 < len(starts) else n
        model = _segment_model(wiener_track[start:stop], order)
        state.trans = transition_matrix(model)
        state.sigma_w2 = model.residual_var
        for t in range(max(start, order), stop):
            state = kf_predict(state)
            gain = kf_gain(state, sigma_v2_track[t])
            state = kf_update(state, gain, noisy_track[t])
            out[t] = state.amplitude
            gains[t] = gain.g[0]
    return out, gains


def enhance_kf_baseline(noisy: signal_core.Waveform, cfg, sigma_v2_grid=None,
                        model=None):
    """Wiener-prefilter, per-segment LP, per-bin KF, noisy-phase resynthesis.

    The noise variance grid comes either from mixing metadata (oracle) or
    from a trained model's noise estimator; exactly one source must be
    available.
    """
    from .enhancer import EnhancementResult, NkfFrameEstimates, estimate_noise_grid

    spec = signal_core.stft(noisy, cfg.window, cfg.hop)
    if sigma_v2_grid is None:
        if model is None:
            raise DataError("KF baseline needs an oracle noise grid or a model")
        sigma_v2_grid = estimate_noise_grid(model, spec)
    sigma_v2_grid = np.asarray(sigma_v2_grid, dtype=np.float64)
    if sigma_v2_grid.shape != spec.amplitude.shape:
        raise DataError("noise grid shape differs from spectrogram")

    sigma_y2 = wiener.track_sigma_y(spec.amplitude, cfg.variance_span)
    tracks = wiener.VarianceTracks(sigma_y2=sigma_y2, sigma_v2=sigma_v2_grid)
    wiener_amp = wiener.apply_wiener(spec.amplitude, tracks)

    enhanced = np.empty_like(spec.amplitude)
    gains = np.empty_like(spec.amplitude)
    for f in range(spec.n_bins):
        enhanced[:, f], gains[:, f] = _run_kf_segmented(
            spec.amplitude[:, f], wiener_amp[:, f], sigma_v2_grid[:, f],
            cfg.lp_order, cfg.lp_segment)

    out_spec = signal_core.recombine(enhanced, spec.phase, cfg.window, cfg.hop)
    waveform = signal_core.istft(out_spec, len(noisy), noisy.sample_rate)
    grids = NkfFrameEstimates(
        amp_lstm=None, amp_wiener=wiener_amp, sigma_r2=None,
        sigma_v2=sigma_v2_grid, gain=gains, amp_out=enhanced)
    return EnhancementResult(waveform=waveform, grids=grids, noisy=noisy)
