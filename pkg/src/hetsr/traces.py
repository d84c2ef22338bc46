"""Digitized heterodyne traces: a calibrated stand-in for the optical front end.

Each signal trace is ``sqrt(n_bar) * envelope(t_i) + eta_i`` and each noise
trace is ``eta_i`` alone, where ``eta_i`` are circular complex Gaussians with
complex variance ``1/dt``. With that scaling the shot noise projected onto any
unit-norm mode has unit complex variance, and the noise-subtracted variance in
the fundamental mode equals ``n_bar`` at zero separation.

Randomness is keyed by ``(seed, stream, block)`` where a block is
``BLOCK_SIZE`` consecutive traces, so any block can be regenerated on its
own, in any order, with bit-identical results.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .model import SourceKind, SourceParams, SourceRealization, line_profiles

BLOCK_SIZE = 1024
SIGNAL_STREAM = 0
NOISE_STREAM = 1

# Half-width, in units of 1/sigma, that the window must cover around t_c.
MIN_HALF_WINDOW = 5.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform sampling grid; ``t_min``/``t_max`` are in units of 1/sigma."""

    n_samples: int = 1024
    t_min: float = -6.0
    t_max: float = 6.0

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise ValueError(f"n_samples must be an integer >= 2, got {self.n_samples}")
        if not self.t_max > self.t_min:
            raise ValueError("t_max must exceed t_min")

    @property
    def dtau(self) -> float:
        return (self.t_max - self.t_min) / (self.n_samples - 1)

    def tau(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_samples)

    def times(self, sigma: float) -> np.ndarray:
        return self.tau() / sigma

    def dt(self, sigma: float) -> float:
        return self.dtau / sigma

    @classmethod
    def around(cls, params: SourceParams, n_samples: int = 1024, half_width: float = 6.0):
        c = params.sigma * params.t_c
        return cls(n_samples, c - half_width, c + half_width)

    def check_covers(self, params: SourceParams):
        c = params.sigma * params.t_c
        if self.t_min > c - MIN_HALF_WINDOW or self.t_max < c + MIN_HALF_WINDOW:
            raise ValueError(
                f"grid [{self.t_min}, {self.t_max}]/sigma must cover t_c*sigma={c} "
                f"+/- {MIN_HALF_WINDOW}; a narrower window truncates the modes"
            )

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "t_min": self.t_min, "t_max": self.t_max}


def _draw_amplitudes(kind: SourceKind, rng: np.random.Generator, count: int):
    if kind is SourceKind.THERMAL:
        # a1, a2 ~ CN(0, 1/2): each quadrature has variance 1/4
        a = rng.standard_normal((count, 4)) * 0.5
        return a[:, 0] + 1j * a[:, 1], a[:, 2] + 1j * a[:, 3]
    phi0 = rng.uniform(0.0, 2.0 * np.pi, count)
    r = 1.0 / math.sqrt(2.0)
    return r * np.exp(1j * phi0), r * np.exp(-1j * phi0)


def draw_realization(params: SourceParams, rng: np.random.Generator) -> SourceRealization:
    """One shot of line amplitudes (unit total mean intensity, ``A0 = 1``)."""
    a1, a2 = _draw_amplitudes(params.kind, rng, 1)
    return SourceRealization(complex(a1[0]), complex(a2[0]))


def _block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, block)))


@dataclass(frozen=True, eq=False)
class TraceBatch:
    """N signal traces and M shot-noise-only traces on a common grid.

    A synthesized batch stores only its recipe; traces are generated block by
    block when iterated. A batch built with :meth:`from_arrays` (or loaded
    from disk) wraps the given arrays instead.
    """

    params: SourceParams
    grid: GridSpec
    n_signal: int
    n_noise: int
    seed: int | None = None
    shot_noise: bool = True
    _signal: np.ndarray | None = field(default=None, repr=False)
    _noise: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_signal < 1 or self.n_noise < 1:
            raise ValueError("a batch needs at least one signal and one noise trace")
        if self._signal is None and self.seed is None:
            raise ValueError("a generated batch needs a seed")
        for arr, n in ((self._signal, self.n_signal), (self._noise, self.n_noise)):
            if arr is not None and arr.shape != (n, self.grid.n_samples):
                raise ValueError(f"trace array has shape {arr.shape}, expected {(n, self.grid.n_samples)}")

    @classmethod
    def from_arrays(cls, params, grid, traces, noise_traces, seed=None) -> "TraceBatch":
        traces = np.asarray(traces)
        noise_traces = np.asarray(noise_traces)
        if traces.ndim != 2 or noise_traces.ndim != 2:
            raise ValueError("trace arrays must be 2-D (count x n_samples)")
        return cls(params, grid, traces.shape[0], noise_traces.shape[0], seed,
                   _signal=traces, _noise=noise_traces)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times(self.params.sigma)

    @property
    def dt(self) -> float:
        return self.grid.dt(self.params.sigma)

    def _generate_block(self, stream: int, block: int) -> np.ndarray:
        start = block * BLOCK_SIZE
        count = min(BLOCK_SIZE, (self.n_signal if stream == SIGNAL_STREAM else self.n_noise) - start)
        n = self.grid.n_samples
        rng = _block_rng(self.seed, stream, block)
        if stream == SIGNAL_STREAM:
            amps = np.stack(_draw_amplitudes(self.params.kind, rng, count), axis=1)
            profiles = np.stack(line_profiles(self.params, self.times))
            signal = (math.sqrt(self.params.n_bar) * amps) @ profiles
        else:
            signal = None
        if not self.shot_noise:
            return signal if signal is not None else np.zeros((count, n), dtype=complex)
        # interleaved (re, im) pairs viewed as complex128
        out = rng.standard_normal((count, 2 * n)).view(complex)
        out *= math.sqrt(0.5 / self.dt)
        if signal is not None:
            out += signal
        return out

    def _chunks(self, stream: int) -> Iterator[np.ndarray]:
        stored = self._signal if stream == SIGNAL_STREAM else self._noise
        total = self.n_signal if stream == SIGNAL_STREAM else self.n_noise
        for block in range(-(-total // BLOCK_SIZE)):
            if stored is not None:
                yield np.asarray(stored[block * BLOCK_SIZE:(block + 1) * BLOCK_SIZE], dtype=complex)
            else:
                yield self._generate_block(stream, block)

    def signal_chunks(self) -> Iterator[np.ndarray]:
        return self._chunks(SIGNAL_STREAM)

    def noise_chunks(self) -> Iterator[np.ndarray]:
        return self._chunks(NOISE_STREAM)

    @property
    def traces(self) -> np.ndarray:
        """All signal traces, materialized (N x n_samples)."""
        return np.concatenate(list(self.signal_chunks()))

    @property
    def noise_traces(self) -> np.ndarray:
        return np.concatenate(list(self.noise_chunks()))


def synthesize_batch(params: SourceParams, grid: GridSpec, n_signal: int, n_noise: int | None = None,
                     seed: int = 0, shot_noise: bool = True) -> TraceBatch:
    """Recipe for ``n_signal`` signal and ``n_noise`` (default ``n_signal``) noise traces.

    ``shot_noise=False`` gives noiseless signal traces and all-zero noise
    traces, useful for checking the estimator's expectation identities.
    """
    grid.check_covers(params)
    if n_noise is None:
        n_noise = n_signal
    return TraceBatch(params, grid, int(n_signal), int(n_noise), int(seed), shot_noise)


# ---------------------------------------------------------------------------
# Binary trace container
#
#   bytes 0-7   magic b"HSRTRC01"
#   bytes 8-11  header length H, uint32 little-endian
#   next H      UTF-8 JSON header: {"format", "grid", "params", "seed",
#               "n_signal", "n_noise", "shot_noise", "dtype": "<c8"}
#   then        n_signal * n_samples complex64 (little-endian, row-major),
#               then n_noise * n_samples complex64
# ---------------------------------------------------------------------------

MAGIC = b"HSRTRC01"
_SAMPLE_DTYPE = np.dtype("<c8")


def save_batch(batch: TraceBatch, path) -> Path:
    path = Path(path)
    header = {
        "format": "hetsr-traces/1",
        "grid": batch.grid.to_dict(),
        "params": batch.params.to_dict(),
        "seed": batch.seed,
        "n_signal": batch.n_signal,
        "n_noise": batch.n_noise,
        "shot_noise": batch.shot_noise,
        "dtype": _SAMPLE_DTYPE.str,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for chunks in (batch.signal_chunks(), batch.noise_chunks()):
            for chunk in chunks:
                fh.write(chunk.astype(_SAMPLE_DTYPE).tobytes())
    return path


def read_header(path) -> tuple[dict, int]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a hetsr trace container")
        (size,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(size).decode("utf-8")), 12 + size


def load_batch(path) -> TraceBatch:
    """Open a trace container; sample blocks are memory-mapped, not read."""
    header, offset = read_header(path)
    grid = GridSpec(**header["grid"])
    params = SourceParams.from_dict(header["params"])
    n, n_sig, n_noise = grid.n_samples, header["n_signal"], header["n_noise"]
    data = np.memmap(path, dtype=np.dtype(header["dtype"]), mode="r", offset=offset,
                     shape=((n_sig + n_noise), n))
    return TraceBatch(params, grid, n_sig, n_noise, header["seed"], header["shot_noise"],
                      _signal=data[:n_sig], _noise=data[n_sig:])
