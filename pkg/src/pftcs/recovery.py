"""Compressive-sensing recovery over a chirp-rate parameter sweep.

The estimator rescales a masked demodulated DFT so that a matched component
appears at its frequency bin with magnitude ``M * |r|`` regardless of the
mask.  Detection thresholds against the missing-sample interference floor,
amplitudes are corrected by a joint least-squares solve over all detected
components, and recovery iterates residual refinement so the number of
components never has to be known in advance.

Grid values follow the demodulation-rate convention: a grid value ``v``
tests the demodulator ``exp(+j*2*pi*v*(m/M)**p)``, which concentrates a
component whose order-``p`` phase coefficient is ``-v``.  Detected
components always carry their actual phase coefficients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import MeasurementSet, phase_cycles
from .transform import KernelParams, Spectrum, kernel_values_at

__all__ = [
    "RankDeficiencyError",
    "ParameterGrid",
    "GridPoint",
    "ThresholdPolicy",
    "DetectedComponent",
    "SweepPoint",
    "RecoverConfig",
    "RecoveryResult",
    "cs_spectral_estimate",
    "detect_components",
    "sweep",
    "amplitude_correction",
    "reconstruct",
    "recover",
]

# Condition-number ceiling for the normal equations of the amplitude solve.
COND_LIMIT = 1e12
# Measurement residual (relative energy) above which a fit is flagged as a
# possible off-grid component.
OFFGRID_RESIDUAL = 1e-6


class RankDeficiencyError(RuntimeError):
    """Amplitude system is underdetermined or numerically rank-deficient."""


@dataclass(frozen=True)
class GridPoint:
    """One candidate from a parameter grid: ``coeffs`` maps order -> rate."""

    index: int
    coeffs: tuple  # ((order, value), ...) ascending order

    @property
    def kernel_params(self) -> KernelParams:
        # rate v demodulates exp(+j2pi v t^p) == kernel coefficient -v
        max_order = max(order for order, _ in self.coeffs)
        higher = [0.0] * (max_order - 1)
        for order, value in self.coeffs:
            higher[order - 2] = -float(value)
        return KernelParams(tuple(higher))

    @property
    def values(self) -> tuple:
        return tuple(v for _, v in self.coeffs)


@dataclass(frozen=True)
class ParameterGrid:
    """Candidate demodulation rates, one value list per polynomial order.

    ``orders`` is a tuple of ``(order, values)`` pairs with orders >= 2 and
    strictly increasing values; multi-order grids enumerate the cross
    product in row-major order.
    """

    orders: tuple

    def __post_init__(self):
        if not self.orders:
            raise ValueError("grid needs at least one order")
        norm = []
        seen = set()
        for order, values in self.orders:
            order = int(order)
            values = tuple(float(v) for v in values)
            if order < 2:
                raise ValueError(f"grid orders start at 2 (the linear term is the DFT axis), got {order}")
            if order in seen:
                raise ValueError(f"duplicate grid order {order}")
            seen.add(order)
            if not values:
                raise ValueError(f"grid order {order} has no values")
            if any(not math.isfinite(v) for v in values):
                raise ValueError(f"grid order {order} has non-finite values")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"grid order {order} values must be strictly increasing")
            norm.append((order, values))
        norm.sort()
        object.__setattr__(self, "orders", tuple(norm))

    @classmethod
    def single(cls, degree, values) -> "ParameterGrid":
        return cls(((int(degree), tuple(values)),))

    @classmethod
    def from_range(cls, degree, start, stop, step) -> "ParameterGrid":
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(round((stop - start) / step)) + 1
        if count < 1 or start + (count - 1) * step > stop + step * 1e-9:
            raise ValueError("empty grid range")
        return cls.single(degree, tuple(start + i * step for i in range(count)))

    @property
    def n_points(self) -> int:
        n = 1
        for _, values in self.orders:
            n *= len(values)
        return n

    def points(self) -> list:
        value_lists = [values for _, values in self.orders]
        order_ids = [order for order, _ in self.orders]
        out = []
        for idx, combo in enumerate(itertools.product(*value_lists)):
            out.append(GridPoint(idx, tuple(zip(order_ids, combo))))
        return out


@dataclass(frozen=True)
class ThresholdPolicy:
    """Detection threshold rule applied to a spectrum's magnitudes.

    ``relative-to-max`` keeps bins within ``ratio`` of the strongest bin.
    ``missing-sample-statistic`` estimates the interference floor robustly
    (Rayleigh median inversion over all bins) and thresholds at
    ``sigma * sqrt(2 ln(M / (1 - confidence)))``, the level the maximum of M
    floor bins exceeds with probability about ``1 - confidence``.
    """

    kind: str
    ratio: float = 0.5
    confidence: float = 0.99

    _KINDS = ("relative-to-max", "missing-sample-statistic")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"policy kind must be one of {self._KINDS}, got {self.kind!r}")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")

    @classmethod
    def relative(cls, ratio=0.5) -> "ThresholdPolicy":
        return cls("relative-to-max", ratio=ratio)

    @classmethod
    def statistic(cls, confidence=0.99) -> "ThresholdPolicy":
        return cls("missing-sample-statistic", confidence=confidence)

    def threshold(self, magnitudes) -> float:
        mags = np.asarray(magnitudes, dtype=np.float64)
        if mags.size == 0:
            return 0.0
        if self.kind == "relative-to-max":
            return self.ratio * float(mags.max())
        sigma = float(np.median(mags)) / math.sqrt(2.0 * math.log(2.0))
        return sigma * math.sqrt(2.0 * math.log(mags.size / (1.0 - self.confidence)))


@dataclass(frozen=True)
class DetectedComponent:
    """One detected component: matched coefficients, bin, magnitudes."""

    params: KernelParams
    freq_bin: int
    raw_magnitude: float
    corrected_amplitude: complex | None = None

    def __post_init__(self):
        if self.freq_bin < 0:
            raise ValueError("freq_bin must be non-negative")
        if not self.raw_magnitude > 0:
            raise ValueError("raw_magnitude must be positive")

    def phase_coeffs(self) -> tuple:
        """Full phase coefficients ``c_1 .. c_n`` (bin as the linear term)."""
        return self.params.full_coeffs(linear=self.freq_bin)


@dataclass(frozen=True)
class SweepPoint:
    """Sweep record: grid point, its top surviving peak, and the peak bin."""

    index: int
    coeffs: tuple
    params: KernelParams
    score: float
    peak_bin: int | None


@dataclass(frozen=True)
class RecoverConfig:
    """Knobs for :func:`recover`.

    ``max_components`` caps the support (default ``max(1, N-1)``, which keeps
    a residual degree of freedom so spurious columns can be pruned; a square
    fit reproduces any measurement vector).  ``per_round`` caps how many
    candidates one refinement round may admit: unlimited suits confident
    thresholds that rarely pass clutter, while ``1`` gives the classic
    greedy pursuit whose mistakes are corrected by later rounds instead of
    crowding the support.  ``pursuit`` selects between stopping when nothing
    clears the threshold (``"threshold"``) and pushing single best
    candidates until the measurement residual is numerically zero
    (``"exact"``, for noiseless data).
    """

    max_components: int | None = None
    max_bins_per_point: int | None = None
    per_round: int | None = None
    prune_ratio: float = 1e-8
    residual_tol: float = 1e-24
    pursuit: str = "threshold"

    def __post_init__(self):
        if self.pursuit not in ("threshold", "exact"):
            raise ValueError(f"pursuit must be 'threshold' or 'exact', got {self.pursuit!r}")
        if self.max_components is not None and self.max_components < 1:
            raise ValueError("max_components must be positive")
        if self.max_bins_per_point is not None and self.max_bins_per_point < 1:
            raise ValueError("max_bins_per_point must be positive")
        if self.per_round is not None and self.per_round < 1:
            raise ValueError("per_round must be positive")
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ValueError("prune_ratio must be in [0, 1)")


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    """Detected components plus the reconstructed full-length signal."""

    components: tuple
    reconstructed: np.ndarray
    measurement_residual_ratio: float
    offgrid_suspect: bool
    residual_energy_ratio: float | None = None


def _scatter_spectra(meas: MeasurementSet, weighted) -> np.ndarray:
    """Batched partial-sum spectra via zero-filled FFTs.

    ``weighted`` is (N, G): per grid point, the measurement values already
    multiplied by that point's kernel.  Returns (M, G) sums
    ``sum_j weighted[j, g] * exp(-2j*pi*k*q_j/M)``, identical to the direct
    formula up to rounding.
    """
    m_len = meas.signal_length
    q = meas.positions - meas.index_origin
    full = np.zeros((m_len, weighted.shape[1]), dtype=np.complex128)
    full[q, :] = weighted
    return np.fft.fft(full, axis=0)


def cs_spectral_estimate(meas: MeasurementSet, params: KernelParams) -> Spectrum:
    """Masked spectral estimate, unbiased at a matched component's bin.

    ``X(k) = (M/N) * sum_{m in positions} y(m) phi(m) exp(-2j pi k (m-m0)/M)``;
    with full data this is exactly the polynomial Fourier transform.
    """
    m_len = meas.signal_length
    phi = kernel_values_at(params, meas.positions, m_len)
    q = (meas.positions - meas.index_origin).astype(np.float64)
    k = np.arange(m_len, dtype=np.float64)
    basis = np.exp(-2j * np.pi / m_len * np.outer(k, q))
    return Spectrum((m_len / meas.count) * (basis @ (meas.values * phi)))


def detect_components(est: Spectrum, policy: ThresholdPolicy, max_count=None,
                      params: KernelParams = KernelParams()) -> list:
    """Bins at or above the policy threshold, strongest first.

    Ties in magnitude break toward the lower bin; the list is truncated to
    ``max_count`` when given.  Zero-magnitude bins never count.
    """
    mags = est.magnitude()
    found = _detect_bins(mags, policy, max_count)
    return [
        DetectedComponent(params, int(b), float(mags[b]))
        for b in found
    ]


def _detect_bins(mags: np.ndarray, policy: ThresholdPolicy, max_count=None) -> list:
    threshold = policy.threshold(mags)
    hits = np.flatnonzero((mags >= threshold) & (mags > 0.0))
    if hits.size == 0:
        return []
    order = np.lexsort((hits, -mags[hits]))
    ranked = [int(hits[i]) for i in order]
    if max_count is not None:
        ranked = ranked[:max_count]
    return ranked


def _kernel_matrix(meas: MeasurementSet, points) -> np.ndarray:
    cols = [kernel_values_at(p.kernel_params, meas.positions, meas.signal_length)
            for p in points]
    return np.stack(cols, axis=1)


def _grid_estimates(meas: MeasurementSet, kernels: np.ndarray, values: np.ndarray) -> np.ndarray:
    """(M, G) spectral estimates of ``values`` for every grid point at once."""
    weighted = values[:, None] * kernels
    return (meas.signal_length / meas.count) * _scatter_spectra(meas, weighted)


def sweep(meas: MeasurementSet, grid: ParameterGrid, policy: ThresholdPolicy) -> list:
    """Single-pass sweep: per grid point, the top surviving peak (0 if none)."""
    points = grid.points()
    kernels = _kernel_matrix(meas, points)
    est = _grid_estimates(meas, kernels, meas.values)
    out = []
    for point in points:
        mags = np.abs(est[:, point.index])
        found = _detect_bins(mags, policy, max_count=1)
        if found:
            out.append(SweepPoint(point.index, point.coeffs, point.kernel_params,
                                  float(mags[found[0]]), found[0]))
        else:
            out.append(SweepPoint(point.index, point.coeffs, point.kernel_params,
                                  0.0, None))
    return out


def _atom_matrix(meas: MeasurementSet, components) -> np.ndarray:
    cols = [
        np.exp(2j * np.pi * phase_cycles(c.phase_coeffs(), meas.positions, meas.signal_length))
        for c in components
    ]
    return np.stack(cols, axis=1)


def _solve_amplitudes(atoms: np.ndarray, values: np.ndarray) -> np.ndarray:
    n, k = atoms.shape
    if n < k:
        raise RankDeficiencyError(
            f"{k} components from {n} measurements: system is underdetermined"
        )
    gram = atoms.conj().T @ atoms
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficiencyError(
            f"amplitude system condition number {cond:.3e} exceeds {COND_LIMIT:.0e}"
        )
    return np.linalg.solve(gram, atoms.conj().T @ values)


def amplitude_correction(meas: MeasurementSet, detected) -> np.ndarray:
    """Joint least-squares amplitudes for the detected components.

    Solves the normal equations of ``y = A x`` where column ``i`` samples
    component ``i``'s unit-amplitude phase polynomial at the measurement
    positions.  Raises :class:`RankDeficiencyError` when there are fewer
    measurements than components or the system is ill-conditioned.
    """
    detected = list(detected)
    if not detected:
        return np.zeros(0, dtype=np.complex128)
    return _solve_amplitudes(_atom_matrix(meas, detected), meas.values)


def reconstruct(components, length, index_origin=0) -> np.ndarray:
    """Full-length signal from detected components (corrected amplitudes)."""
    m = np.arange(index_origin, index_origin + length)
    out = np.zeros(length, dtype=np.complex128)
    for comp in components:
        if comp.corrected_amplitude is None:
            raise ValueError("component amplitudes are uncorrected; run amplitude_correction")
        out += comp.corrected_amplitude * np.exp(
            2j * np.pi * phase_cycles(comp.phase_coeffs(), m, length)
        )
    return out


def _energy(x) -> float:
    return float(np.sum(np.abs(np.asarray(x)) ** 2))


def _best_pair(meas: MeasurementSet, kernels: np.ndarray, points, policy,
               limit: int = 40):
    """Strongest two-atom joint fit among policy-passing estimate cells.

    Components of comparable strength can all sit below the largest clutter
    value of a sparse estimate, in which case no single-atom greedy start
    recovers them; a joint two-atom fit is far more selective because only
    the true pair drives the residual toward zero.  Returns the best pair as
    ``[(point_index, bin, magnitude), ...]`` or ``None`` when fewer than two
    candidates pass the policy.  The pool is capped at ``limit`` cells and
    nearly collinear pairs are skipped.
    """
    est = _grid_estimates(meas, kernels, meas.values)
    mags = np.abs(est)
    pool = []
    for point in points:
        pool.extend(
            (float(mags[b, point.index]), point.index, b)
            for b in _detect_bins(mags[:, point.index], policy, None)
        )
    pool.sort(key=lambda item: (-item[0], item[1], item[2]))
    pool = pool[:limit]
    if len(pool) < 2:
        return None
    pending = [
        DetectedComponent(points[pi].kernel_params, b, mag)
        for mag, pi, b in pool
    ]
    atoms = _atom_matrix(meas, pending)
    gram = atoms.conj().T @ atoms
    corr = atoms.conj().T @ meas.values
    diag = np.real(np.diag(gram)).copy()
    det = diag[:, None] * diag[None, :] - np.abs(gram) ** 2
    # closed-form 2x2 least squares for every (i, j) pair at once
    num_i = diag[None, :] * corr[:, None] - gram * corr[None, :]
    num_j = diag[:, None] * corr[None, :] - gram.conj() * corr[:, None]
    captured = np.real(corr.conj()[:, None] * num_i + corr.conj()[None, :] * num_j)
    valid = np.triu(np.ones(det.shape, dtype=bool), k=1)
    valid &= det > 1e-9 * diag[:, None] * diag[None, :]
    if not valid.any():
        return None
    score = np.where(valid, np.divide(captured, det, where=det > 0,
                                      out=np.zeros_like(captured)), -np.inf)
    i, j = np.unravel_index(int(np.argmax(score)), score.shape)
    return [
        (pool[i][1], pool[i][2], pool[i][0]),
        (pool[j][1], pool[j][2], pool[j][0]),
    ]


def recover(meas: MeasurementSet, grid: ParameterGrid, policy: ThresholdPolicy,
            config: RecoverConfig | None = None, reference=None) -> RecoveryResult:
    """Full pipeline: sweep, detect, joint amplitude correction, reconstruct.

    Component discovery iterates: each round detects every bin above the
    policy threshold across all grid points of the current measurement
    residual, extends the support, re-solves the joint least squares, and
    subtracts the fit.  In exact-pursuit mode a round with no threshold
    survivors admits the single strongest remaining candidate instead, so
    noiseless on-grid signals are driven to a numerically zero residual.
    Spurious support entries are pruned by relative amplitude afterwards.

    An empty detection yields an empty result, not an error; rank problems
    in the amplitude solve propagate as :class:`RankDeficiencyError`.
    """
    cfg = config or RecoverConfig()
    m_len, n_meas = meas.signal_length, meas.count
    points = grid.points()
    kernels = _kernel_matrix(meas, points)
    y = meas.values
    y_energy = _energy(y)
    cap = cfg.max_components if cfg.max_components is not None else max(1, min(m_len, n_meas - 1))

    def refit(entries):
        pending = [
            DetectedComponent(points[pi].kernel_params, b, mag)
            for pi, b, mag in entries
        ]
        atoms = _atom_matrix(meas, pending)
        fitted = _solve_amplitudes(atoms, y)
        left = y - atoms @ fitted
        ratio = _energy(left) / y_energy if y_energy > 0 else 0.0
        return fitted, left, ratio

    def try_extend(entries, candidate):
        """Fit with one more atom; None if that makes the system degenerate.

        Skipping (rather than failing on) a candidate that is numerically
        dependent on the current atoms keeps near-duplicate bins, which are
        strongly correlated over few measurements, out of the support.
        """
        trial = entries + [candidate]
        try:
            return (trial,) + refit(trial)
        except RankDeficiencyError:
            return None

    def pursue(per_round, seed=None):
        """One full pursuit pass; returns (support, amps, residual, ratio)."""
        support = []      # [(point_index, bin, raw_magnitude)]
        tried = set()     # every pair ever considered; never considered twice
        amps = np.zeros(0, dtype=np.complex128)
        residual = y.copy()
        residual_ratio = 1.0 if y_energy > 0 else 0.0
        best = None       # (ratio, support snapshot) of the best fit seen
        stalls = 0
        stall_limit = max(8, cap)
        max_rounds = 8 * cap + 64

        for pi, b, mag in seed or ():
            if len(support) >= cap or (pi, b) in tried:
                continue
            tried.add((pi, b))
            extended = try_extend(support, (pi, b, mag))
            if extended is not None:
                support, amps, residual, residual_ratio = extended
        if support:
            best = (residual_ratio, list(support))

        for _ in range(max_rounds):
            if residual_ratio <= cfg.residual_tol:
                break
            est = _grid_estimates(meas, kernels, residual)
            mags = np.abs(est)
            batch = []
            for point in points:
                found = _detect_bins(mags[:, point.index], policy, cfg.max_bins_per_point)
                batch.extend(
                    (float(mags[b, point.index]), point.index, b)
                    for b in found if (point.index, b) not in tried
                )
            batch.sort(key=lambda item: (-item[0], item[1], item[2]))
            if not batch and cfg.pursuit == "exact":
                flat = np.argsort(mags, axis=None)[::-1]
                for flat_idx in flat:
                    b, pi = np.unravel_index(flat_idx, mags.shape)
                    if mags[b, pi] > 0.0 and (int(pi), int(b)) not in tried:
                        batch = [(float(mags[b, pi]), int(pi), int(b))]
                        break
            if not batch:
                break
            if len(support) < cap:
                # grow the support with this round's strongest candidates
                admitted = 0
                limit = cap - len(support)
                if per_round is not None:
                    limit = min(limit, per_round)
                for mag, pi, b in batch:
                    if admitted >= limit:
                        break
                    tried.add((pi, b))
                    extended = try_extend(support, (pi, b, mag))
                    if extended is None:
                        continue
                    support, amps, residual, residual_ratio = extended
                    admitted += 1
            elif cfg.pursuit == "exact":
                # at capacity: trial-swap the best new candidate against the
                # weakest fitted atom, keeping whichever support fits better
                mag, pi, b = batch[0]
                tried.add((pi, b))
                extended = try_extend(support, (pi, b, mag))
                if extended is None:
                    stalls += 1
                    if stalls >= stall_limit:
                        break
                    continue
                trial, trial_amps = extended[0], extended[1]
                del trial[int(np.argmin(np.abs(trial_amps)))]
                previous = residual_ratio
                amps, residual, residual_ratio = refit(trial)
                support = trial
                if residual_ratio > previous * 0.99:
                    stalls += 1
                    if stalls >= stall_limit:
                        break
                else:
                    stalls = 0
            else:
                break
            if best is None or residual_ratio < best[0]:
                best = (residual_ratio, list(support))

        if best is not None and best[0] < residual_ratio:
            support = best[1]
            amps, residual, residual_ratio = refit(support)
        return support, amps, residual, residual_ratio

    support, amps, residual, residual_ratio = pursue(cfg.per_round)
    if (cfg.pursuit == "exact" and residual_ratio > cfg.residual_tol
            and support and cap > 1):
        # restart with the complementary admission style: batch admission
        # keeps true peaks prominent when clutter is dense, one-at-a-time
        # admission avoids crowding when clutter is sparse; a miss under
        # one style is often a hit under the other
        retry = 1 if cfg.per_round is None else None
        alt_support, alt_amps, alt_residual, alt_ratio = pursue(retry)
        if alt_ratio < residual_ratio:
            support, amps, residual, residual_ratio = (
                alt_support, alt_amps, alt_residual, alt_ratio
            )
    if (cfg.pursuit == "exact" and residual_ratio > cfg.residual_tol
            and cap >= 3):
        # last resort: seed with the best joint two-atom fit instead of the
        # single strongest cell, which rescues components of similar size
        # that all sit just below the sparse estimate's clutter maximum
        pair = _best_pair(meas, kernels, points, policy)
        if pair is not None:
            alt_support, alt_amps, alt_residual, alt_ratio = pursue(
                cfg.per_round, seed=pair)
            if alt_ratio < residual_ratio:
                support, amps, residual, residual_ratio = (
                    alt_support, alt_amps, alt_residual, alt_ratio
                )

    if support:
        scale = float(np.max(np.abs(amps)))
        keep = [i for i in range(len(support)) if abs(amps[i]) > cfg.prune_ratio * scale]
        if len(keep) < len(support):
            support = [support[i] for i in keep]
            if support:
                amps, residual, residual_ratio = refit(support)

    if not support:
        reconstructed = np.zeros(m_len, dtype=np.complex128)
        ratio = None
        if reference is not None:
            ref = np.asarray(reference, dtype=np.complex128)
            ratio = _energy(ref - reconstructed) / _energy(ref)
        return RecoveryResult((), reconstructed,
                              1.0 if y_energy > 0 else 0.0, y_energy > 0, ratio)

    order = sorted(range(len(support)),
                   key=lambda i: (-support[i][2], support[i][0], support[i][1]))
    components = tuple(
        DetectedComponent(points[support[i][0]].kernel_params, support[i][1],
                          support[i][2], complex(amps[i]))
        for i in order
    )
    reconstructed = reconstruct(components, m_len, meas.index_origin)
    ratio = None
    if reference is not None:
        ref = np.asarray(reference, dtype=np.complex128)
        ratio = _energy(ref - reconstructed) / _energy(ref)
    return RecoveryResult(components, reconstructed, residual_ratio,
                          residual_ratio > OFFGRID_RESIDUAL, ratio)
