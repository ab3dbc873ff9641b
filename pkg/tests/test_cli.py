import os

import numpy as np
import pytest

from nkf import data_io
from nkf.cli import main
from nkf.config import RunConfig
from nkf.signal_core import Waveform

TINY = ["--set", "window=64", "--set", "hop=16", "--set", "lstm_units=8",
        "--set", "lstm_layers=1", "--set", "fnn_hidden=16",
        "--set", "context=5", "--set", "variance_span=8",
        "--set", "train_count=4", "--set", "dev_count=1",
        "--set", "test_count=2", "--set", "utterance_seconds=0.5",
        "--set", "batch=2", "--set", "seq_len=48", "--set", "epochs=1",
        "--set", "seed=3"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny corpus plus a briefly trained checkpoint, shared module-wide."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    ckpt_dir = root / "run"
    assert main(TINY + ["synth", "--out", str(corpus)]) == 0
    assert main(TINY + ["train", "--corpus", str(corpus),
                        "--out", str(ckpt_dir), "--max-steps", "2"]) == 0
    return root, corpus, ckpt_dir / "model.nkf"


class TestSynth:
    def test_writes_corpus_and_config_echo(self, workspace):
        root, corpus, _ = workspace
        assert (corpus / "manifest.csv").exists()
        assert (corpus / "resolved.cfg").exists()
        manifest = data_io.load_manifest(corpus / "manifest.csv")
        assert len(manifest.entries) == 7


class TestTrain:
    def test_outputs(self, workspace):
        root, _, ckpt = workspace
        assert ckpt.exists()
        assert (ckpt.parent / "loss_history.csv").exists()
        assert (ckpt.parent / "resolved.cfg").exists()


class TestEnhance:
    def test_manifest_methods(self, workspace, tmp_path):
        root, corpus, ckpt = workspace
        for method in ("nkf", "wiener", "lstm"):
            out = tmp_path / method
            rc = main(TINY + ["enhance", "--checkpoint", str(ckpt),
                              "--manifest", str(corpus / "manifest.csv"),
                              "--split", "test", "--method", method,
                              "--out", str(out)])
            assert rc == 0
            assert (out / "test_0000.wav").exists()
            assert (out / "test_0001.wav").exists()

    def test_kf_with_oracle_noise(self, workspace, tmp_path):
        root, corpus, ckpt = workspace
        out = tmp_path / "kf"
        rc = main(TINY + ["enhance", "--manifest", str(corpus / "manifest.csv"),
                          "--method", "kf", "--oracle-noise",
                          "--out", str(out)])
        assert rc == 0
        assert (out / "test_0000.wav").exists()

    def test_wiener_with_oracle_noise_needs_no_checkpoint(self, workspace,
                                                          tmp_path):
        root, corpus, ckpt = workspace
        out = tmp_path / "wnr"
        rc = main(TINY + ["enhance", "--manifest", str(corpus / "manifest.csv"),
                          "--method", "wiener", "--oracle-noise",
                          "--out", str(out)])
        assert rc == 0
        assert (out / "test_0000.wav").exists()

    def test_single_wav_with_grid_dump(self, workspace, tmp_path):
        root, corpus, ckpt = workspace
        wav = tmp_path / "input.wav"
        rng = np.random.default_rng(0)
        data_io.write_wav(Waveform(0.1 * rng.standard_normal(8000)), wav)
        out = tmp_path / "single"
        rc = main(TINY + ["enhance", "--checkpoint", str(ckpt), "--wav",
                          str(wav), "--dump-grids", "--out", str(out)])
        assert rc == 0
        assert (out / "input.wav").exists()
        grids = np.load(out / "input_grids.npz")
        assert set(grids.files) >= {"amp_out", "gain", "sigma_v2"}
        assert np.all(grids["gain"] >= 0) and np.all(grids["gain"] <= 1)

    def test_wiener_with_zero_oracle_noise_roundtrips(self, workspace, tmp_path):
        # a zero noise estimate makes the Wiener path an identity up to
        # synthesis tolerance; route it through the kf method's oracle grid
        root, corpus, ckpt = workspace
        cfg = RunConfig(window=64, hop=16, lstm_units=8, lstm_layers=1,
                        fnn_hidden=16, context=5, variance_span=8,
                        train_count=4, dev_count=1, test_count=2,
                        utterance_seconds=0.5, batch=2, seq_len=48, epochs=1,
                        seed=3)
        entry = data_io.load_manifest(corpus / "manifest.csv").split_entries("test")[0]
        clean = data_io.read_wav(entry.clean_path)
        from nkf.kalman import enhance_kf_baseline
        from nkf.wiener import track_sigma_y
        from nkf.signal_core import stft
        spec = stft(clean, cfg.window, cfg.hop)
        result = enhance_kf_baseline(clean, cfg,
                                     sigma_v2_grid=np.zeros_like(spec.amplitude))
        interior = slice(cfg.window, len(clean) - cfg.window)
        err = np.max(np.abs(result.waveform.samples[interior]
                            - clean.samples[interior]))
        assert err < 1e-6

    def test_usage_errors(self, workspace, tmp_path):
        root, corpus, ckpt = workspace
        # no input source
        rc = main(TINY + ["enhance", "--checkpoint", str(ckpt),
                          "--out", str(tmp_path / "x")])
        assert rc == 1
        # neural methods need a checkpoint
        rc = main(TINY + ["enhance", "--manifest", str(corpus / "manifest.csv"),
                          "--method", "nkf", "--out", str(tmp_path / "y")])
        assert rc == 1

    def test_missing_file_is_data_error(self, workspace, tmp_path):
        root, corpus, ckpt = workspace
        rc = main(TINY + ["enhance", "--checkpoint", str(ckpt), "--wav",
                          str(tmp_path / "missing.wav"),
                          "--out", str(tmp_path / "z")])
        assert rc == 2


class TestEval:
    def test_report_rows_and_ceiling(self, workspace, tmp_path):
        root, corpus, _ = workspace
        manifest = data_io.load_manifest(corpus / "manifest.csv")
        enhanced = tmp_path / "perfect"
        os.makedirs(enhanced)
        for e in manifest.split_entries("test"):
            data_io.write_wav(data_io.read_wav(e.clean_path),
                              enhanced / f"{e.utt_id}.wav")
        report = tmp_path / "report.csv"
        rc = main(TINY + ["eval", "--manifest", str(corpus / "manifest.csv"),
                          "--enhanced", str(enhanced), "--out", str(report)])
        assert rc == 0
        lines = report.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[:5] == ["utt_id", "snr_db", "fwsegsnr", "segsnr",
                              "amp_mse"]
        data_rows = [l.split(",") for l in lines[1:] if not l.startswith("MEAN")]
        for row in data_rows:
            assert float(row[2]) == pytest.approx(35.0)
        assert any(l.startswith("MEAN@") for l in lines[1:])

    def test_empty_eval_is_data_error(self, workspace, tmp_path):
        root, corpus, _ = workspace
        empty = tmp_path / "none"
        os.makedirs(empty)
        rc = main(TINY + ["eval", "--manifest", str(corpus / "manifest.csv"),
                          "--enhanced", str(empty),
                          "--out", str(tmp_path / "r.csv")])
        assert rc == 2


class TestGradcheckAndUsage:
    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "max relative gradient error" in out

    def test_unknown_command_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_bad_config_value(self, tmp_path):
        assert main(["--set", "window=13", "synth",
                     "--out", str(tmp_path / "c")]) == 1
