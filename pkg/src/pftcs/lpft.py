"""Local polynomial Fourier transform and piecewise recovery.

The signal is split into adjacent equal windows; each window gets its own
short spectrum after demodulation.  The demodulator is the slice of the
full-length kernel over that window's actual sample positions, so a
component that is matched globally stays concentrated in every window it
occupies and the single-window transform degenerates exactly to the full
transform.  Piecewise signals are recovered window by window: every
candidate from the rate grid is fitted to the window's measurements and
the candidate with the smallest residual wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MeasurementSet
from .recovery import (
    ParameterGrid,
    RankDeficiencyError,
    ThresholdPolicy,
    _detect_bins,
    _energy,
)
from .transform import KernelParams, _dft_matrix, kernel_values_at

__all__ = [
    "LpftSpectrogram",
    "LpftSweepPoint",
    "WindowAssignment",
    "LpftRecoveryResult",
    "lpft",
    "lpft_cs_estimate",
    "lpft_sweep",
    "lpft_recover",
]


def _check_window(window: int, length: int):
    if window < 2:
        raise ValueError(f"window must be at least 2, got {window}")
    if length % window != 0:
        raise ValueError(f"window {window} does not divide signal length {length}")


@dataclass(frozen=True, eq=False)
class LpftSpectrogram:
    """Per-window spectra: ``blocks[b, k]`` is window ``b``, bin ``k``.

    ``counts`` holds the number of samples that fed each window;
    ``empty_windows`` lists windows that had none (their rows are zero).
    """

    blocks: np.ndarray
    window: int
    length: int
    index_origin: int
    params: KernelParams
    counts: tuple
    empty_windows: tuple = ()

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.complex128)
        if blocks.ndim != 2 or blocks.shape != (self.length // self.window, self.window):
            raise ValueError("blocks must be (length // window, window)")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_windows(self) -> int:
        return self.blocks.shape[0]

    def window_start(self, index: int) -> int:
        return self.index_origin + index * self.window

    def magnitude(self) -> np.ndarray:
        return np.abs(self.blocks)


def lpft(samples, params: KernelParams, window: int, index_origin=0) -> LpftSpectrogram:
    """Local transform of fully sampled data.

    Window ``b`` covers positions ``m0 + b*W .. m0 + (b+1)*W - 1``; its
    spectrum is the length-``W`` DFT of the demodulated samples, indexed by
    the offset into the window.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    length = samples.size
    _check_window(window, length)
    positions = np.arange(index_origin, index_origin + length)
    demod = samples * kernel_values_at(params, positions, length)
    n_win = length // window
    blocks = demod.reshape(n_win, window) @ _dft_matrix(window)
    return LpftSpectrogram(blocks, window, length, index_origin, params,
                           (window,) * n_win)


def _window_of(meas: MeasurementSet, window: int) -> np.ndarray:
    return (meas.positions - meas.index_origin) // window


def lpft_cs_estimate(meas: MeasurementSet, params: KernelParams, window: int) -> LpftSpectrogram:
    """Masked per-window spectra, unbiased at matched bins.

    Window ``b`` with ``N_b`` of its ``W`` samples available gets
    ``(W/N_b) * sum y(m) phi(m) exp(-2j pi k (m - start_b)/W)``.  Windows
    with no samples are zero and reported in ``empty_windows``.
    """
    length = meas.signal_length
    _check_window(window, length)
    n_win = length // window
    phi = kernel_values_at(params, meas.positions, length)
    weighted = meas.values * phi
    owner = _window_of(meas, window)
    local = (meas.positions - meas.index_origin) % window
    k = np.arange(window, dtype=np.float64)
    blocks = np.zeros((n_win, window), dtype=np.complex128)
    counts = []
    empty = []
    for b in range(n_win):
        sel = np.flatnonzero(owner == b)
        counts.append(sel.size)
        if sel.size == 0:
            empty.append(b)
            continue
        basis = np.exp(-2j * np.pi / window * np.outer(k, local[sel].astype(np.float64)))
        blocks[b] = (window / sel.size) * (basis @ weighted[sel])
    return LpftSpectrogram(blocks, window, length, meas.index_origin, params,
                           tuple(counts), tuple(empty))


@dataclass(frozen=True)
class LpftSweepPoint:
    """Sweep record: grid point, summed-detection score, and its peak bin."""

    index: int
    coeffs: tuple
    params: KernelParams
    score: float
    peak_bin: int | None


def lpft_sweep(meas: MeasurementSet, grid: ParameterGrid, window: int,
               policy: ThresholdPolicy) -> list:
    """Score each grid point by its cross-window detection projection.

    Per window, bins at or above the policy threshold keep their magnitude
    and everything else is zeroed; the surviving magnitudes are summed
    across windows per bin and the score is the largest bin total.  A rate
    matched anywhere accumulates over every window it occupies, so piecewise
    constant rates still stand out against per-window clutter.
    """
    out = []
    for point in grid.points():
        spect = lpft_cs_estimate(meas, point.kernel_params, window)
        mags = spect.magnitude()
        projection = np.zeros(window, dtype=np.float64)
        for b in range(spect.n_windows):
            if spect.counts[b] == 0:
                continue
            for k in _detect_bins(mags[b], policy):
                projection[k] += mags[b, k]
        peak = int(np.argmax(projection))
        score = float(projection[peak])
        out.append(LpftSweepPoint(point.index, point.coeffs, point.kernel_params,
                                  score, peak if score > 0 else None))
    return out


@dataclass(frozen=True)
class WindowAssignment:
    """Winning candidate for one window (or none, when nothing fitted)."""

    window_index: int
    start: int
    grid_index: int | None
    params: KernelParams | None
    bins: tuple
    amplitudes: tuple
    residual_ratio: float | None


@dataclass(frozen=True, eq=False)
class LpftRecoveryResult:
    """Per-window assignments plus the stitched full-length reconstruction."""

    assignments: tuple
    reconstructed: np.ndarray
    unassigned_windows: tuple

    @property
    def n_windows(self) -> int:
        return len(self.assignments)


def _window_fit(values, positions, start, window, length, params, bins):
    """Least-squares amplitudes of window atoms at the measured positions.

    Atom ``i`` is ``conj(phi(m)) * exp(2j pi k_i (m - start)/W)``: undoing
    the demodulation turns a fitted local bin back into signal samples.
    """
    local = (positions - start).astype(np.float64)
    inv = np.conj(kernel_values_at(params, positions, length))
    atoms = np.stack(
        [inv * np.exp(2j * np.pi * k * local / window) for k in bins], axis=1
    )
    n, k = atoms.shape
    if n < k:
        raise RankDeficiencyError(
            f"{k} window atoms from {n} measurements: system is underdetermined"
        )
    gram = atoms.conj().T @ atoms
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise RankDeficiencyError(
            f"window fit condition number {cond:.3e} exceeds 1e+12"
        )
    amps = np.linalg.solve(gram, atoms.conj().T @ values)
    residual = values - atoms @ amps
    return amps, _energy(residual) / _energy(values)


def lpft_recover(meas: MeasurementSet, grid: ParameterGrid, window: int,
                 policy: ThresholdPolicy, max_bins_per_window=None) -> LpftRecoveryResult:
    """Window-by-window recovery of a piecewise polynomial-phase signal.

    Candidates are the grid points whose sweep score is positive.  For each
    window, every candidate is tried: bins are detected from that
    candidate's masked window spectrum (capped at ``max(1, N_b // 2 - 1)``
    unless overridden, leaving residual headroom for the comparison), the
    window measurements are fitted, and the candidate with the smallest
    relative residual is assigned; earlier grid points win ties.  Windows
    with no measurements or no fitting candidate reconstruct as zeros and
    are listed in ``unassigned_windows``.
    """
    length = meas.signal_length
    _check_window(window, length)
    n_win = length // window
    candidates = [p for p in lpft_sweep(meas, grid, window, policy) if p.score > 0]
    spectra = {
        c.index: lpft_cs_estimate(meas, KernelParams(c.params.higher_coeffs), window)
        for c in candidates
    }
    owner = _window_of(meas, window)
    points = {p.index: p for p in grid.points()}

    assignments = []
    unassigned = []
    reconstructed = np.zeros(length, dtype=np.complex128)
    for b in range(n_win):
        start = meas.index_origin + b * window
        sel = np.flatnonzero(owner == b)
        if sel.size == 0 or not candidates:
            assignments.append(WindowAssignment(b, start, None, None, (), (), None))
            unassigned.append(b)
            continue
        cap = max_bins_per_window
        if cap is None:
            cap = max(1, sel.size // 2 - 1)
        best = None
        for cand in candidates:
            spect = spectra[cand.index]
            bins = _detect_bins(np.abs(spect.blocks[b]), policy, cap)
            if not bins:
                continue
            try:
                amps, ratio = _window_fit(
                    meas.values[sel], meas.positions[sel], start, window,
                    length, cand.params, bins,
                )
            except RankDeficiencyError:
                continue
            if best is None or ratio < best[0]:
                best = (ratio, cand.index, tuple(bins), tuple(complex(a) for a in amps))
        if best is None:
            assignments.append(WindowAssignment(b, start, None, None, (), (), None))
            unassigned.append(b)
            continue
        ratio, grid_index, bins, amps = best
        params = points[grid_index].kernel_params
        assignments.append(WindowAssignment(b, start, grid_index, params,
                                            bins, amps, ratio))
        positions = np.arange(start, start + window)
        inv = np.conj(kernel_values_at(params, positions, length))
        local = np.arange(window, dtype=np.float64)
        lo = b * window
        for k, amp in zip(bins, amps):
            reconstructed[lo:lo + window] += amp * inv * np.exp(
                2j * np.pi * k * local / window
            )
    return LpftRecoveryResult(tuple(assignments), reconstructed, tuple(unassigned))
