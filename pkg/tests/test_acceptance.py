"""Acceptance gate: one test per shipping criterion, each printing a
pass/fail line with its measured quantities. Run with ``pytest -s
tests/test_acceptance.py`` to see the lines as they pass."""

import contextlib
import time

import numpy as np
import pytest

from nkf import data_io, enhancer, metrics
from nkf.config import RunConfig
from nkf.enhancer import nkf_combine, nkf_gain
from nkf.kalman import KfState, kf_gain, run_kf
from nkf.linear_prediction import (LpModel, autocorrelate, levinson_durbin,
                                   transition_matrix)
from nkf.networks import build_model
from nkf.signal_core import Waveform, istft, stft
from nkf.wiener import wiener_gain

from test_enhancer import _independent_gradient_check


@contextlib.contextmanager
def _report(number, name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} ({name}): FAIL")
        raise
    print(f"ACCEPTANCE {number} ({name}): PASS")


# -- shared desk-scale corpus and trained model -------------------------------

DESK_TRAIN_STEPS = 200


@pytest.fixture(scope="module")
def desk_corpus(tmp_path_factory):
    cfg = RunConfig(test_snrs=(5.0,), epochs=7)
    t0 = time.time()
    manifest = data_io.synth_corpus(cfg, tmp_path_factory.mktemp("desk"))
    return cfg, manifest, time.time() - t0


@pytest.fixture(scope="module")
def trained_desk_model(desk_corpus):
    cfg, manifest, synth_seconds = desk_corpus
    model = build_model(cfg.n_bins, lstm_units=cfg.lstm_unit_list,
                        fnn_hidden=cfg.fnn_hidden, context=cfg.context,
                        window=cfg.window, hop=cfg.hop,
                        variance_span=cfg.variance_span, seed=cfg.seed)
    t0 = time.time()
    model, history = enhancer.train(model, manifest, cfg,
                                    max_steps=DESK_TRAIN_STEPS)
    return model, history, synth_seconds + (time.time() - t0)


def test_criterion_01_stft_perfect_reconstruction():
    with _report(1, "STFT perfect reconstruction"):
        t0 = time.time()
        rng = np.random.default_rng(1)
        x = rng.standard_normal(16000)
        y = istft(stft(Waveform(x), 256, 64), 16000).samples
        interior = slice(256, 16000 - 256)
        err = np.max(np.abs(y[interior] - x[interior])) / np.max(np.abs(x))
        elapsed = time.time() - t0
        print(f"  interior relative error {err:.2e} in {elapsed:.2f}s", end=" ")
        assert err < 1e-6
        assert elapsed < 1.0


def test_criterion_02_levinson_against_normal_equations():
    with _report(2, "LP oracle"):
        t0 = time.time()
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(100):
            order = int(rng.integers(1, 9))
            x = np.convolve(rng.standard_normal(4096),
                            rng.uniform(0.2, 1.0, 4), mode="same")
            r = autocorrelate(x, order)
            m = levinson_durbin(r, order)
            toeplitz = np.array([[r[abs(i - j)] for j in range(order)]
                                 for i in range(order)])
            direct = np.linalg.solve(toeplitz, r[1:order + 1])
            worst = max(worst, float(np.max(np.abs(m.coeffs - direct))))
        elapsed = time.time() - t0
        print(f"  max coefficient error {worst:.2e} in {elapsed:.2f}s", end=" ")
        assert worst < 1e-8
        assert elapsed < 5.0


def test_criterion_03_scalar_kalman_equivalence():
    with _report(3, "scalar-KF equivalence"):
        t0 = time.time()
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(50):
            a = rng.uniform(-0.95, 0.95)
            q = rng.uniform(1e-3, 0.5)
            y = rng.uniform(0, 3, 1000)
            sv = rng.uniform(0.01, 2.0, 1000)
            got = run_kf(y, LpModel(1, np.array([a]), q), sv)
            # independently coded textbook scalar recursion
            x, p = y[0], sv[0]
            want = np.empty(1000)
            want[0] = y[0]
            for t in range(1, 1000):
                x = a * x
                p = a * a * p + q
                k = p / (sv[t] + p)
                x = x + k * (y[t] - x)
                p = (1 - k) * p
                want[t] = max(0.0, x)
            worst = max(worst, float(np.max(np.abs(got - want))))
        elapsed = time.time() - t0
        print(f"  max track deviation {worst:.2e} in {elapsed:.2f}s", end=" ")
        assert worst < 1e-10
        assert elapsed < 10.0


def test_criterion_04_kf_reduces_mse_on_ar2():
    with _report(4, "KF MMSE sanity"):
        t0 = time.time()
        rng = np.random.default_rng(4)
        wins = 0
        for _ in range(100):
            radius = rng.uniform(0.3, 0.95)
            theta = rng.uniform(0.1, np.pi - 0.1)
            a1, a2 = 2 * radius * np.cos(theta), -radius * radius
            sw = rng.uniform(0.05, 0.3)
            x = np.zeros(800)
            w = sw * rng.standard_normal(800)
            for t in range(2, 800):
                x[t] = a1 * x[t - 1] + a2 * x[t - 2] + w[t]
            x = x[200:]
            sv2 = float(np.var(x))  # 0 dB
            y = x + np.sqrt(sv2) * rng.standard_normal(len(x))
            lp = LpModel(2, np.array([a1, a2]), sw * sw)
            est = run_kf(y, lp, np.full(len(x), sv2))
            wins += np.mean((est - x) ** 2) < np.mean((y - x) ** 2)
        elapsed = time.time() - t0
        print(f"  KF beat the observations in {wins}/100 trials "
              f"in {elapsed:.1f}s", end=" ")
        assert wins >= 95
        assert elapsed < 30.0


def test_criterion_05_gain_unit_intervals_and_limits():
    with _report(5, "gain-formula units"):
        rng = np.random.default_rng(5)
        n = 100000
        # Wiener gain
        gw = wiener_gain(rng.uniform(0, 10, n), rng.uniform(0, 10, n))
        assert np.all((gw >= 0) & (gw <= 1))
        # NKF gain
        gn = nkf_gain(rng.uniform(1e-6, 1e3, n), rng.uniform(1e-6, 1e3, n))
        assert np.all((gn > 0) & (gn < 1))
        # KF gain, full matrix path
        for _ in range(n // 50):
            p = int(rng.integers(1, 5))
            m = rng.standard_normal((p, p))
            state = KfState(x=np.zeros(p), ree=m @ m.T,
                            trans=transition_matrix(
                                LpModel(p, np.zeros(p), 0.0)),
                            sigma_w2=0.0)
            g = kf_gain(state, float(rng.uniform(0, 3)))
            assert -1e-12 <= g.g[0] <= 1 + 1e-12
        # limit cases hit the endpoints
        assert abs(wiener_gain(0.0, 2.0) - 1.0) < 1e-6
        assert abs(wiener_gain(2.0, 2.0) - 0.0) < 1e-6
        state = KfState(x=np.zeros(1), ree=np.array([[0.5]]),
                        trans=transition_matrix(LpModel(1, np.zeros(1), 0.0)),
                        sigma_w2=0.0)
        assert abs(kf_gain(state, 0.0).g[0] - 1.0) < 1e-6
        assert abs(nkf_gain(1e-8, 1.0) - 0.0) < 1e-6
        assert abs(nkf_gain(1.0, 1e-8) - 1.0) < 1e-6


def test_criterion_06_convex_combination_exact():
    with _report(6, "convex combination"):
        rng = np.random.default_rng(6)
        n = 100000
        g = nkf_gain(rng.uniform(1e-6, 1e2, n), rng.uniform(1e-6, 1e2, n))
        w = rng.uniform(0, 10, n)
        l = rng.uniform(0, 10, n)
        out = nkf_combine(g, w, l)
        lo, hi = np.minimum(w, l), np.maximum(w, l)
        assert np.all(out >= lo)
        assert np.all(out <= hi)
        # endpoints are exact identities
        assert nkf_combine(0.0, 7.0, 3.0) == 3.0
        assert nkf_combine(1.0, 7.0, 3.0) == 7.0


def test_criterion_07_end_to_end_gradient_check():
    with _report(7, "end-to-end gradient check"):
        t0 = time.time()
        model = build_model(4, lstm_units=(2,), fnn_hidden=8, context=3,
                            window=6, hop=3, variance_span=4, seed=0)
        rng = np.random.default_rng(105)
        noisy_amp = rng.uniform(0.5, 3.0, (5, 4))
        clean_amp = rng.uniform(0.1, 2.5, (5, 4))
        worst = _independent_gradient_check(model, noisy_amp, clean_amp)
        elapsed = time.time() - t0
        n_params = sum(p.values.size for p in model.parameters().values())
        print(f"  max relative error {worst:.2e} over {n_params} parameters "
              f"in {elapsed:.1f}s", end=" ")
        assert worst < 1e-4
        assert elapsed < 60.0


def test_criterion_08_training_smoke(trained_desk_model):
    with _report(8, "training smoke"):
        model, history, elapsed = trained_desk_model
        h = np.array(history)
        assert len(h) == DESK_TRAIN_STEPS
        assert np.all(np.isfinite(h))
        for p in model.parameters().values():
            assert np.all(np.isfinite(p.values))
        smoothed = np.convolve(h, np.ones(10) / 10, mode="valid")
        ratio = smoothed[-1] / smoothed[0]
        print(f"  smoothed loss {smoothed[0]:.4f} -> {smoothed[-1]:.4f} "
              f"(ratio {ratio:.3f}) in {elapsed:.0f}s", end=" ")
        assert ratio <= 0.5
        assert elapsed < 600.0


def test_criterion_09_enhancement_beats_noisy(desk_corpus, trained_desk_model):
    with _report(9, "end-to-end enhancement gain"):
        cfg, manifest, _ = desk_corpus
        model, _, _ = trained_desk_model
        t0 = time.time()
        nkf_scores, wiener_scores, noisy_scores = [], [], []
        for e in manifest.split_entries("test"):
            assert e.mix.snr_db == 5.0
            clean = data_io.read_wav(e.clean_path)
            noisy = data_io.read_wav(e.noisy_path)
            nkf_out = enhancer.enhance(model, noisy, method="nkf").waveform
            wiener_out = enhancer.enhance(model, noisy, method="wiener").waveform
            nkf_scores.append(metrics.fwsegsnr(clean, nkf_out))
            wiener_scores.append(metrics.fwsegsnr(clean, wiener_out))
            noisy_scores.append(metrics.fwsegsnr(clean, noisy))
        elapsed = time.time() - t0
        nkf_db = float(np.mean(nkf_scores))
        wiener_db = float(np.mean(wiener_scores))
        noisy_db = float(np.mean(noisy_scores))
        print(f"  FwSegSNR noisy {noisy_db:.2f} dB, wiener {wiener_db:.2f} dB, "
              f"nkf {nkf_db:.2f} dB in {elapsed:.0f}s", end=" ")
        assert nkf_db > noisy_db + 1.0
        assert nkf_db >= wiener_db
        assert elapsed < 300.0


def test_criterion_10_determinism(tmp_path):
    with _report(10, "determinism"):
        cfg = RunConfig(window=64, hop=16, lstm_units=8, lstm_layers=1,
                        fnn_hidden=16, context=5, variance_span=8,
                        train_count=4, dev_count=1, test_count=2,
                        utterance_seconds=0.5, batch=2, seq_len=48,
                        epochs=3, seed=3)

        def one_run(tag):
            root = tmp_path / tag
            manifest = data_io.synth_corpus(cfg, root)
            model = build_model(cfg.n_bins, lstm_units=cfg.lstm_unit_list,
                                fnn_hidden=cfg.fnn_hidden, context=cfg.context,
                                window=cfg.window, hop=cfg.hop,
                                variance_span=cfg.variance_span, seed=cfg.seed)
            model, history = enhancer.train(model, manifest, cfg, max_steps=6)
            waves = []
            for e in manifest.split_entries("test"):
                noisy = data_io.read_wav(e.noisy_path)
                out = enhancer.enhance(model, noisy).waveform
                waves.append(out.samples.tobytes())
            corpus_bytes = [(root / "manifest.csv").read_bytes()]
            for e in manifest.entries:
                for p in (e.clean_path, e.noisy_path, e.noise_path):
                    with open(p, "rb") as fh:
                        corpus_bytes.append(fh.read())
            return corpus_bytes, history, waves

        corpus_a, history_a, waves_a = one_run("a")
        corpus_b, history_b, waves_b = one_run("b")
        assert corpus_a == corpus_b
        assert history_a == history_b
        assert waves_a == waves_b
