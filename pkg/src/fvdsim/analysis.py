"""Decay-rate extraction, exponential scaling fits and resonance-peak location."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from fvdsim.errors import ArgumentError, DomainError, EmptyWindowError, LogDomainError
from fvdsim.observables import TimeSeries
from fvdsim.protocols import ExperimentConfig, InitialKind, InitialState, _run, prepare_initial, resonance_ramp_experiment
from fvdsim.schedule import Schedule

MIN_FIT_POINTS = 3
MIN_SCALING_POINTS = 4
_TIME_SLACK = 1e-12


class WindowMethod(str, enum.Enum):
    FORMULA = "formula"
    PERCENTAGE = "percentage"
    MANUAL = "manual"


@dataclass(frozen=True)
class FitWindow:
    t_start: float
    t_end: float
    method: WindowMethod = WindowMethod.MANUAL
    alpha_low: float | None = None
    alpha_high: float | None = None
    horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", WindowMethod(self.method))
        if not 0.0 <= self.t_start < self.t_end:
            raise ArgumentError(f"fit window needs 0 <= t_start < t_end, got ({self.t_start}, {self.t_end})")

    def contains(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return (times >= self.t_start - _TIME_SLACK) & (times <= self.t_end + _TIME_SLACK)


@dataclass(frozen=True)
class FitResult:
    """``M_res ~ exp(intercept - gamma t)`` over ``window``.

    ``truncated_at`` is the time of the first non-positive sample when the
    window had to be cut short, otherwise ``None``.
    """

    gamma: float
    gamma_stderr: float
    window: FitWindow
    r_squared: float
    points_used: int
    intercept: float = 0.0
    truncated_at: float | None = None

    @property
    def truncated(self) -> bool:
        return self.truncated_at is not None


def formula_window(v_over_dl: float) -> FitWindow:
    """Window that grows affinely with ``V / Delta_l``: start 0.034 + 0.0058 r, end 0.11 + 0.034 r (us)."""
    if not v_over_dl > 0:
        raise ArgumentError(f"v_over_dl must be positive, got {v_over_dl}")
    return FitWindow(0.034 + 0.0058 * v_over_dl, 0.11 + 0.034 * v_over_dl, WindowMethod.FORMULA)


def percentage_window(times, values, alpha_low: float = 0.2, alpha_high: float = 0.9,
                      horizon: float | None = None) -> FitWindow:
    """Earliest continuous run of samples inside the decay band.

    With ``y_min`` the minimum of the rescaled order on ``[0, horizon]`` and
    ``y_max = 1``, the band is ``[y_min + a_low (1 - y_min), y_min + a_high (1 - y_min)]``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if not 0.0 <= alpha_low < alpha_high <= 1.0:
        raise ArgumentError(f"need 0 <= alpha_low < alpha_high <= 1, got {alpha_low}, {alpha_high}")
    horizon = float(times[-1]) if horizon is None else float(horizon)
    if times[-1] < horizon - _TIME_SLACK:
        raise ArgumentError(f"series ends at {times[-1]} before the horizon {horizon}")
    inside = times <= horizon + _TIME_SLACK
    t, y = times[inside], values[inside]
    y_max = 1.0
    y_min = float(y.min())
    if y_max - y_min <= 1e-12:
        raise EmptyWindowError("series does not decay on the horizon; the percentage band is empty")
    lo = y_min + alpha_low * (y_max - y_min)
    hi = y_min + alpha_high * (y_max - y_min)
    in_band = (y >= lo) & (y <= hi)
    if not in_band.any():
        raise EmptyWindowError(f"no samples with rescaled order in [{lo:.4g}, {hi:.4g}]")
    first = int(np.argmax(in_band))
    last = first
    while last + 1 < in_band.size and in_band[last + 1]:
        last += 1
    if t[last] <= t[first]:
        raise EmptyWindowError(f"the decay band holds a single sample at t={t[first]:.4g}")
    return FitWindow(float(t[first]), float(t[last]), WindowMethod.PERCENTAGE, alpha_low, alpha_high, horizon)


def _line_fit(x: np.ndarray, y: np.ndarray):
    """Ordinary least squares ``y = a + b x``; returns a, b, se_a, se_b, r2, weights of b."""
    n = x.size
    xm = x.mean()
    sxx = float(((x - xm) ** 2).sum())
    b = float(((x - xm) * (y - y.mean())).sum() / sxx)
    a = float(y.mean() - b * xm)
    resid = y - (a + b * x)
    ssr = float((resid**2).sum())
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    s2 = ssr / (n - 2) if n > 2 else 0.0
    se_b = float(np.sqrt(s2 / sxx))
    se_a = float(np.sqrt(s2 * (1.0 / n + xm**2 / sxx)))
    return a, b, se_a, se_b, r2, (x - xm) / sxx


def fit_decay(times, values, window: FitWindow, stderr=None) -> FitResult:
    """Unweighted least squares of ``ln M_res`` against ``t`` inside ``window``.

    If the rescaled order reaches zero inside the window, the fit keeps the
    samples before the first non-positive one and records the cut.  The
    reported standard error combines the residual scatter with the
    propagated sample errors ``stderr`` (trajectory runs) in quadrature.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = np.flatnonzero(window.contains(times))
    truncated_at = None
    bad = sel[values[sel] <= 0]
    if bad.size:
        truncated_at = float(times[bad[0]])
        sel = sel[sel < bad[0]]
        if sel.size < MIN_FIT_POINTS:
            raise LogDomainError(
                f"rescaled order is non-positive inside the fit window; {sel.size} positive samples remain",
                offending=[(float(times[i]), float(values[i])) for i in bad],
            )
    if sel.size < MIN_FIT_POINTS:
        raise EmptyWindowError(f"fit window [{window.t_start}, {window.t_end}] holds {sel.size} samples; need 3")
    x, y = times[sel], np.log(values[sel])
    a, b, _, se_b, r2, w = _line_fit(x, y)
    if stderr is not None:
        sig = np.asarray(stderr, dtype=float)[sel] / values[sel]
        se_b = float(np.hypot(se_b, np.sqrt(np.sum((w * sig) ** 2))))
    used = window
    if truncated_at is not None:
        used = FitWindow(window.t_start, float(x[-1]), window.method, window.alpha_low, window.alpha_high,
                         window.horizon)
    return FitResult(-b, se_b, used, r2, int(sel.size), a, truncated_at)


def fit_series(series: TimeSeries, window: FitWindow) -> FitResult:
    return fit_decay(series.times, series.m_afm_res, window, series.m_afm_res_stderr if series.trajectories > 1 else None)


@dataclass(frozen=True)
class ScalingFit:
    """``ln(gamma / omega) = intercept - lambda_ * (V / Delta_l)``."""

    lambda_: float
    intercept: float
    r_squared: float
    range_used: tuple[float, ...]
    lambda_stderr: float = 0.0
    intercept_stderr: float = 0.0
    residual_std: float = 0.0

    def predict(self, v_over_dl) -> np.ndarray:
        return self.intercept - self.lambda_ * np.asarray(v_over_dl, dtype=float)

    def prediction_stderr(self, v_over_dl) -> np.ndarray:
        """Standard error of the fitted line at ``v_over_dl``."""
        x = np.asarray(self.range_used)
        xm = x.mean()
        sxx = float(((x - xm) ** 2).sum())
        r = np.asarray(v_over_dl, dtype=float)
        return self.residual_std * np.sqrt(1.0 / x.size + (r - xm) ** 2 / sxx)

    def to_dict(self) -> dict:
        return {"lambda": self.lambda_, "intercept": self.intercept, "r_squared": self.r_squared,
                "range": list(self.range_used), "lambda_stderr": self.lambda_stderr,
                "intercept_stderr": self.intercept_stderr}


def scaling_fit(points: Sequence[tuple[float, float, float]], v_range: tuple[float, float] | None = None) -> ScalingFit:
    """Regress ``ln(gamma / omega)`` on ``V / Delta_l`` over the points inside ``v_range``."""
    arr = np.asarray(points, dtype=float).reshape(-1, 3)
    if v_range is not None:
        arr = arr[(arr[:, 0] >= v_range[0]) & (arr[:, 0] <= v_range[1])]
    if arr.shape[0] < MIN_SCALING_POINTS:
        raise ArgumentError(f"scaling fit needs >= {MIN_SCALING_POINTS} points, got {arr.shape[0]}")
    if np.any(arr[:, 1] <= 0) or np.any(arr[:, 2] <= 0):
        raise DomainError("decay rates and Rabi frequencies must be positive for a log fit")
    x = arr[:, 0]
    y = np.log(arr[:, 1] / arr[:, 2])
    a, b, se_a, se_b, r2, _ = _line_fit(x, y)
    resid = y - (a + b * x)
    res_std = float(np.sqrt((resid**2).sum() / (x.size - 2))) if x.size > 2 else 0.0
    return ScalingFit(-b, a, r2, tuple(float(v) for v in x), se_b, se_a, res_std)


# ---------------------------------------------------------------------------
# scans


@dataclass(frozen=True)
class DecayPoint:
    v_over_dl: float
    gamma: float
    gamma_stderr: float
    r_squared: float
    window_start: float
    window_end: float
    method: str
    omega: float
    truncated: bool = False


def decay_sample_times(v_over_dl: float, method: WindowMethod, horizon: float | None, dt: float) -> np.ndarray:
    end = formula_window(v_over_dl).t_end if method is WindowMethod.FORMULA else horizon
    return np.arange(0.0, end * 1.02 + dt, dt)


HORIZON_FACTOR = 1.5


def default_horizon(v_over_dl: float) -> float:
    """Percentage-criterion horizon: 1.5 formula-window ends.

    Long enough to contain the first decay, short enough to exclude the
    revivals that follow it; a revival minimum would stretch the band.
    """
    return HORIZON_FACTOR * formula_window(v_over_dl).t_end


def decay_rate_scan(base: ExperimentConfig, ratios: Sequence[float], method: WindowMethod = WindowMethod.FORMULA,
                    *, dt: float = 0.002, alpha_low: float = 0.2, alpha_high: float = 0.9,
                    horizon: float | None = None) -> tuple[list[DecayPoint], list[TimeSeries]]:
    """Quench from the configured initial state at ``delta_l = V / ratio`` and fit the decay rate.

    The initial state does not depend on ``delta_l`` (it is prepared at the
    pre-quench parameters), so it is prepared once for the whole scan.
    """
    method = WindowMethod(method)
    if len(ratios) == 0:
        raise ArgumentError("empty ratio list")
    spec0 = base.spec
    initial = prepare_initial(spec0, base.initial)
    points, series_list = [], []
    for r in ratios:
        spec = spec0.with_(delta_l=spec0.v_nn / float(r))
        hz = default_horizon(r) if horizon is None else horizon
        times = decay_sample_times(r, method, hz, dt)
        cfg = base.with_(spec=spec, schedule=Schedule.constant(spec, float(times[-1])), sample_times=tuple(times))
        series, _ = _run(cfg, initial, cfg.resolved_schedule(), times)
        if method is WindowMethod.FORMULA:
            window = formula_window(r)
        else:
            window = percentage_window(series.times, series.m_afm_res, alpha_low, alpha_high, hz)
        fit = fit_series(series, window)
        points.append(DecayPoint(float(r), fit.gamma, fit.gamma_stderr, fit.r_squared, fit.window.t_start,
                                 fit.window.t_end, method.value, spec.omega, fit.truncated))
        series_list.append(series)
    return points, series_list


def write_scan_csv(path, points: Sequence[DecayPoint]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v_over_dl", "gamma", "gamma_stderr", "r_squared", "window_start", "window_end", "method"])
        for p in points:
            w.writerow([f"{p.v_over_dl:.16e}", f"{p.gamma:.16e}", f"{p.gamma_stderr:.16e}", f"{p.r_squared:.16e}",
                        f"{p.window_start:.16e}", f"{p.window_end:.16e}", p.method])


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class ResonanceScan:
    length: int
    ratios: np.ndarray
    values: np.ndarray
    peak: float | None
    series: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"L": self.length, "peak_v_over_dl": self.peak,
                "max_sigma": float(self.values.max()) if self.values.size else None}


def locate_peak(x, y, floor: float = 1e-12) -> float | None:
    """Vertex of the parabola through the maximum sample and its neighbours.

    Returns ``None`` when the signal never exceeds ``floor``; at an edge of
    the grid the edge abscissa is returned.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    if y[k] <= floor:
        return None
    if k == 0 or k == y.size - 1:
        return float(x[k])
    x0, x1, x2 = x[k - 1 : k + 2]
    y0, y1, y2 = y[k - 1 : k + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return float(x1)
    return float(np.clip(-b / (2 * a), x0, x2))


def resonance_scan(base: ExperimentConfig, ratios: Sequence[float], length: int, omega_f: float,
                   ramp_duration: float, keep_series: bool = False) -> ResonanceScan:
    """Final ``<Sigma_L>`` after the sqrt ramp for each ``V / Delta_l`` in ``ratios`` (ascending)."""
    ratios = np.asarray(ratios, dtype=float)
    if ratios.size == 0:
        raise ArgumentError("empty ratio list")
    if np.any(np.diff(ratios) <= 0):
        raise ArgumentError("ratios must be sorted ascending")
    if not 1 <= length <= base.spec.n_sites - 1:
        raise ArgumentError(f"bubble length must be in [1, {base.spec.n_sites - 1}]")
    vals, kept = [], []
    lengths = tuple(sorted(set(base.bubble_lengths) | {length}))
    cfg0 = base.with_(initial=InitialState(InitialKind.NEEL), sample_times=(0.0, ramp_duration), bubble_lengths=lengths)
    for r in ratios:
        cfg = cfg0.with_(spec=base.spec.with_(delta_l=base.spec.v_nn / r))
        series = resonance_ramp_experiment(cfg, omega_f, ramp_duration)
        vals.append(float(series.values[f"sigma_{length}"][-1]))
        if keep_series:
            kept.append(series)
    values = np.array(vals)
    return ResonanceScan(length, ratios, values, locate_peak(ratios, values), kept)


def write_resonance_csv(path, scan: ResonanceScan) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v_over_dl", f"sigma_{scan.length}"])
        for r, v in zip(scan.ratios, scan.values):
            w.writerow([f"{r:.16e}", f"{v:.16e}"])
