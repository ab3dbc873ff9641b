"""WAV ingestion/emission, SNR-controlled mixing, and the synthetic corpus.

The corpus generator replaces large speech/noise databases at desk scale:
"speech" is a harmonic tone complex with wandering pitch, a slowly varying
amplitude envelope and smooth pauses; "noise" cycles through white, pink,
and amplitude-modulated band-limited flavors. Everything is derived from
integer seeds, so a corpus regenerates bit-identically.

Corpus layout under the output directory:

    manifest.csv
    {train,dev,test}/clean/<utt>.wav
    {train,dev,test}/noisy/<utt>.wav
    {train,dev,test}/noise/<utt>.wav      (the scaled noise actually added)

WAV files are mono 16 kHz, PCM 16-bit or IEEE float32; the corpus is written
as float32 so re-measured mix SNRs stay within micro-dB of the request.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from . import signal_core, wiener
from .errors import DataError

_SILENT_POWER = 1e-20

SPLITS = ("train", "dev", "test")
NOISE_KINDS = ("white", "pink", "amnoise")


@dataclass(frozen=True)
class MixSpec:
    snr_db: float
    seed: int
    speech_id: str
    noise_id: str


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    split: str
    clean_path: str
    noisy_path: str
    noise_path: str
    mix: MixSpec


@dataclass
class CorpusManifest:
    entries: list

    def split_entries(self, split: str) -> list:
        return [e for e in self.entries if e.split == split]


# -- WAV ---------------------------------------------------------------------


def read_wav(path, expected_rate: int = 16000) -> signal_core.Waveform:
    """Read a mono PCM16 or float32 WAV at the expected sample rate."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, struct.error) as exc:
        raise DataError(f"malformed header in {path}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if data.ndim != 1:
        raise DataError(f"{path}: only mono audio is supported")
    if rate != expected_rate:
        raise DataError(f"{path}: unsupported sample rate {rate}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported encoding {data.dtype}")
    if not np.all(np.isfinite(samples)):
        raise DataError(f"{path}: non-finite samples")
    return signal_core.Waveform(samples, rate)


def write_wav(w: signal_core.Waveform, path, encoding: str = "float32"):
    """Write PCM 16-bit (within one LSB of the input) or exact float32."""
    if encoding == "pcm16":
        data = np.clip(np.rint(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif encoding == "float32":
        data = w.samples.astype(np.float32)
    else:
        raise DataError(f"unsupported encoding {encoding!r}")
    wavfile.write(path, w.sample_rate, data)


# -- mixing -------------------------------------------------------------------


def mix_at_snr(speech: signal_core.Waveform, noise: signal_core.Waveform,
               snr_db: float, rng=None):
    """Scale a random contiguous noise segment so the mix hits ``snr_db``.

    Returns the noisy mixture and the scaled noise segment (for oracle
    noise-variance computation). Power is measured over the full utterance.
    """
    if not np.isfinite(snr_db):
        raise DataError("target SNR must be finite")
    if speech.sample_rate != noise.sample_rate:
        raise DataError("speech and noise sample rates differ")
    if len(noise) < len(speech):
        raise DataError("noise must be at least as long as the speech")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    start = int(rng.integers(0, len(noise) - len(speech) + 1))
    segment = noise.samples[start:start + len(speech)]
    p_speech = float(np.mean(speech.samples ** 2))
    p_noise = float(np.mean(segment ** 2))
    if p_speech <= _SILENT_POWER or p_noise <= _SILENT_POWER:
        raise DataError("silent speech or noise")
    scale = np.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled = segment * scale
    noisy = signal_core.Waveform(speech.samples + scaled, speech.sample_rate)
    return noisy, signal_core.Waveform(scaled, speech.sample_rate)


def oracle_noise_variance(scaled_noise: signal_core.Waveform, cfg) -> np.ndarray:
    """Ground-truth noise variance grid under the pipeline's framing."""
    spec = signal_core.stft(scaled_noise, cfg.window, cfg.hop)
    return wiener.track_sigma_y(spec.amplitude, cfg.variance_span)


# -- synthetic signals ---------------------------------------------------------


def _synth_speech(rng, n_samples: int, sample_rate: int) -> np.ndarray:
    """Harmonic tone complex with moving pitch, envelope, and pauses."""
    t = np.arange(n_samples) / sample_rate
    duration = n_samples / sample_rate
    f0_base = rng.uniform(90.0, 220.0)
    f0 = f0_base * (
        1.0
        + 0.06 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
        + 0.10 * np.sin(2 * np.pi * rng.uniform(0.1, 0.4) * t + rng.uniform(0, 2 * np.pi))
    )
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    n_harm = min(int(4000.0 / f0_base), 24)
    sig = np.zeros(n_samples)
    for h in range(1, n_harm + 1):
        sig += (1.0 / h) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    # slowly varying envelope, ~8 control points per second
    n_ctrl = max(int(duration * 8), 2)
    ctrl_t = np.linspace(0.0, duration, n_ctrl)
    env = np.interp(t, ctrl_t, rng.uniform(0.3, 1.0, n_ctrl))
    # smooth pauses
    for _ in range(int(rng.integers(1, 3))):
        center = rng.uniform(0.15, 0.85) * duration
        half = 0.5 * rng.uniform(0.2, 0.5)
        env *= 1.0 / (1.0 + np.exp(-(np.abs(t - center) - half) / 0.01))
    sig *= env
    peak = np.max(np.abs(sig))
    if peak > 0:
        sig *= rng.uniform(0.15, 0.3) / peak
    return sig


def _synth_noise(rng, kind: str, n_samples: int, sample_rate: int) -> np.ndarray:
    """White, pink, or amplitude-modulated band-limited noise at rms 0.1."""
    white = rng.standard_normal(n_samples)
    if kind == "white":
        sig = white
    elif kind == "pink":
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
        spectrum[1:] /= np.sqrt(freqs[1:] / freqs[1])
        sig = np.fft.irfft(spectrum, n=n_samples)
    elif kind == "amnoise":
        lo = rng.uniform(200.0, 2000.0)
        hi = min(lo * rng.uniform(2.0, 6.0), 0.45 * sample_rate)
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
        spectrum[(freqs < lo) | (freqs > hi)] = 0.0
        band = np.fft.irfft(spectrum, n=n_samples)
        t = np.arange(n_samples) / sample_rate
        rate = rng.uniform(0.5, 4.0)
        sig = band * (0.55 + 0.45 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    else:
        raise DataError(f"unknown noise kind {kind!r}")
    rms = np.sqrt(np.mean(sig ** 2))
    return sig * (0.1 / rms)


# -- corpus -------------------------------------------------------------------


def _utterance_seed(master_seed: int, split_index: int, index: int) -> int:
    seq = np.random.SeedSequence([int(master_seed), split_index, index])
    return int(seq.generate_state(1)[0])


def synth_corpus(cfg, out_dir, seed: int | None = None) -> CorpusManifest:
    """Generate the deterministic synthetic corpus and write its manifest."""
    seed = cfg.seed if seed is None else seed
    counts = {"train": cfg.train_count, "dev": cfg.dev_count, "test": cfg.test_count}
    grids = {"train": cfg.train_snrs, "dev": cfg.train_snrs, "test": cfg.test_snrs}
    n_samples = int(round(cfg.utterance_seconds * cfg.sample_rate))
    entries = []
    for split_index, split in enumerate(SPLITS):
        for sub in ("clean", "noisy", "noise"):
            os.makedirs(os.path.join(out_dir, split, sub), exist_ok=True)
        for i in range(counts[split]):
            useed = _utterance_seed(seed, split_index, i)
            rng = np.random.default_rng(useed)
            speech = signal_core.Waveform(
                _synth_speech(rng, n_samples, cfg.sample_rate), cfg.sample_rate)
            kind = NOISE_KINDS[i % len(NOISE_KINDS)]
            noise = signal_core.Waveform(
                _synth_noise(rng, kind, int(1.5 * n_samples), cfg.sample_rate),
                cfg.sample_rate)
            grid = grids[split]
            snr_db = float(grid[int(rng.integers(len(grid)))])
            noisy, scaled = mix_at_snr(speech, noise, snr_db, rng)
            utt_id = f"{split}_{i:04d}"
            paths = {sub: os.path.join(split, sub, f"{utt_id}.wav")
                     for sub in ("clean", "noisy", "noise")}
            write_wav(speech, os.path.join(out_dir, paths["clean"]))
            write_wav(noisy, os.path.join(out_dir, paths["noisy"]))
            write_wav(scaled, os.path.join(out_dir, paths["noise"]))
            entries.append(ManifestEntry(
                utt_id=utt_id, split=split,
                clean_path=os.path.join(out_dir, paths["clean"]),
                noisy_path=os.path.join(out_dir, paths["noisy"]),
                noise_path=os.path.join(out_dir, paths["noise"]),
                mix=MixSpec(snr_db=snr_db, seed=useed,
                            speech_id=f"harmonic_{split}_{i:04d}",
                            noise_id=f"{kind}_{split}_{i:04d}"),
            ))
    manifest = CorpusManifest(entries=entries)
    write_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest


_MANIFEST_FIELDS = ("utt_id", "split", "snr_db", "seed", "speech_id",
                    "noise_id", "clean", "noisy", "noise")


def write_manifest(manifest: CorpusManifest, path):
    root = os.path.dirname(os.path.abspath(path))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_MANIFEST_FIELDS)
        for e in manifest.entries:
            writer.writerow([
                e.utt_id, e.split, repr(e.mix.snr_db), e.mix.seed,
                e.mix.speech_id, e.mix.noise_id,
                os.path.relpath(e.clean_path, root),
                os.path.relpath(e.noisy_path, root),
                os.path.relpath(e.noise_path, root),
            ])


def load_manifest(path) -> CorpusManifest:
    """Read a manifest; paths must exist and utterance ids be unique."""
    root = os.path.dirname(os.path.abspath(path))
    entries = []
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or \
                    tuple(reader.fieldnames) != _MANIFEST_FIELDS:
                raise DataError(f"{path}: unexpected manifest header")
            for row in reader:
                paths = {key: os.path.join(root, row[key])
                         for key in ("clean", "noisy", "noise")}
                for p in paths.values():
                    if not os.path.exists(p):
                        raise DataError(f"manifest references missing file {p}")
                entries.append(ManifestEntry(
                    utt_id=row["utt_id"], split=row["split"],
                    clean_path=paths["clean"], noisy_path=paths["noisy"],
                    noise_path=paths["noise"],
                    mix=MixSpec(snr_db=float(row["snr_db"]),
                                seed=int(row["seed"]),
                                speech_id=row["speech_id"],
                                noise_id=row["noise_id"]),
                ))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    ids = [e.utt_id for e in entries]
    if len(set(ids)) != len(ids):
        raise DataError("manifest contains duplicate utterance ids")
    return CorpusManifest(entries=entries)
