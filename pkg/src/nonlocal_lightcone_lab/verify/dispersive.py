from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from ..errors import DivergenceError, HypothesisError
from ..lattice import Lattice, RealField, RegionSet, distance_function
from ..models import MIN_FIT_POINTS, DecayFit, InequalityReport
from ..propagate import StateTrajectory


logger = logging.getLogger(__name__)

# Tail masses below this are round-off.
TAIL_FLOOR = 1e-14
MARKOV_RTOL = 1e-12
EXPONENT_SLACK = 0.3


@dataclass(frozen=True, eq=False)
class TailSeries:
    times: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.times.size)


def _outside_cone(dist: RealField, c: float, t: float) -> np.ndarray:
    """Sites of X^c_{c|t|}, i.e. d_X > c|t|."""
    return dist.values > c * abs(t)


def tail_mass_series(
    traj: StateTrajectory,
    X: RegionSet,
    c: float,
    lat: Lattice,
    *,
    distance: Optional[RealField] = None,
) -> TailSeries:
    """int_{X^c_{c|t|}} |psi_t|^2 at every trajectory time."""
    dist = distance if distance is not None else distance_function(lat, X)
    vol = traj.cell_volume
    values = np.array(
        [vol * float(np.sum(np.abs(s.amplitudes[_outside_cone(dist, c, t)]) ** 2)) for t, s in zip(traj.times, traj.states)]
    )
    return TailSeries(np.array(traj.times), values)


def fit_decay(
    times: Sequence[float],
    values: Sequence[float],
    n: int,
    fit_window: tuple[float, float],
    floor: float = TAIL_FLOOR,
) -> DecayFit:
    """Least-squares slope of log(value) against log(t) over the window, excluding values at or below the floor."""
    lo, hi = float(fit_window[0]), float(fit_window[1])
    if not (0 < lo <= hi):
        raise ValueError(f"fit_window must satisfy 0 < t_min <= t_max, got {fit_window}")
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    inside = (t >= lo) & (t <= hi)
    t_win, v_win = t[inside], v[inside]
    common = {"times": t_win.tolist(), "values": v_win.tolist(), "fit_window": (lo, hi)}
    if t_win.size == 0:
        return DecayFit(**common, status="inconclusive")
    sup_scaled = float(np.max(t_win**n * v_win))
    if np.all(v_win == 0.0):
        return DecayFit(**common, sup_scaled=0.0, status="exact_zero")
    usable = v_win > floor
    if int(usable.sum()) < MIN_FIT_POINTS:
        logger.info("decay fit inconclusive: %d of %d samples above the floor %.0e", int(usable.sum()), t_win.size, floor)
        return DecayFit(**common, points_used=int(usable.sum()), sup_scaled=sup_scaled, status="inconclusive")
    x, y = np.log(t_win[usable]), np.log(v_win[usable])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return DecayFit(
        **common,
        fitted_exponent=float(slope),
        residual=residual,
        points_used=int(usable.sum()),
        sup_scaled=sup_scaled,
        status="fit",
    )


def lightcone_decay_fit(
    traj: StateTrajectory,
    X: RegionSet,
    c: float,
    n: int,
    fit_window: tuple[float, float],
    lat: Lattice,
    floor: float = TAIL_FLOOR,
    *,
    distance: Optional[RealField] = None,
) -> DecayFit:
    """Fitted exponent of the mass outside X_{c|t|} against t."""
    series = tail_mass_series(traj, X, c, lat, distance=distance)
    fit = fit_decay(series.times, series.values, n, fit_window, floor)
    logger.info(
        "decay fit status=%s exponent=%s sup|t|^n tail=%s (points=%d)",
        fit.status,
        fit.fitted_exponent,
        fit.sup_scaled,
        fit.points_used,
    )
    return fit


def decay_report(fit: DecayFit, n: int, slack: float = EXPONENT_SLACK) -> InequalityReport:
    """Exponent <= -n + slack as a one-margin report; the sup of |t|^n tail is the fitted constant."""
    if fit.status == "exact_zero":
        margins = [0.0]
    elif fit.status == "inconclusive" or fit.fitted_exponent is None:
        margins = [math.nan]
    else:
        margins = [(-n + slack) - fit.fitted_exponent]
    return InequalityReport.from_margins(
        "lightcone_decay",
        margins,
        tolerance=0.0,
        samples=list(fit.fit_window),
        smallest_C=fit.sup_scaled,
        details={"status": fit.status, "fitted_exponent": fit.fitted_exponent, "residual": fit.residual, "points_used": fit.points_used},
    )


def strichartz_from_series(
    times: Sequence[float],
    tail_mass: Sequence[float],
    p_exp: float,
    n: int,
    decay_exponent: Optional[float] = None,
) -> float:
    """
    (int tail_mass(t)^p dt)^(1/p): trapezoid over the samples, plus the power-law tail
    v(T) (t/T)^-a beyond the last sample T when `decay_exponent` a is given.

    A mass decaying like t^-n keeps the integral finite exactly when p > 1/n.
    """
    if not (p_exp > 1.0 / n):
        raise HypothesisError(f"Strichartz exponent p={p_exp} must exceed 1/n={1.0 / n}", p=p_exp, n=n)
    t = np.asarray(times, dtype=float)
    v = np.asarray(tail_mass, dtype=float)
    if t.size != v.size or t.size < 2:
        raise ValueError("need at least two (time, value) samples of equal length")
    if np.any(v < 0):
        raise ValueError("tail values must be >= 0")
    total = float(trapezoid(v**p_exp, t))
    if decay_exponent is not None and v[-1] > 0:
        power = decay_exponent * p_exp
        if power <= 1:
            raise DivergenceError("tail extrapolation diverges (a * p <= 1)", decay_exponent=decay_exponent, p=p_exp)
        total += float(v[-1] ** p_exp * t[-1] / (power - 1.0))
    return total ** (1.0 / p_exp)


def strichartz_norm(
    traj: StateTrajectory,
    X: RegionSet,
    c: float,
    p_exp: float,
    n: int,
    lat: Lattice,
    fit: Optional[DecayFit] = None,
    *,
    t_end: Optional[float] = None,
    distance: Optional[RealField] = None,
) -> float:
    """
    L^p_t norm of the mass outside X_{c|t|} over [0, t_end], extrapolated with the decay
    fitted on [t_end/2, t_end] unless `fit` is given.
    """
    series = tail_mass_series(traj, X, c, lat, distance=distance)
    times, values = series.times, series.values
    if t_end is not None:
        keep = times <= t_end
        times, values = times[keep], values[keep]
    end = float(times[-1])
    if fit is None:
        fit = fit_decay(times, values, n, (max(end / 2.0, 1e-12), end))
    exponent = -fit.fitted_exponent if fit.status == "fit" and fit.fitted_exponent is not None else None
    return strichartz_from_series(times, values, p_exp, n, exponent)


def markov_tail_measure(
    traj: StateTrajectory,
    X: RegionSet,
    c: float,
    n: int,
    lat: Lattice,
) -> TailSeries:
    """h^d #{x in X^c_{c|t|} : |psi_t(x)|^2 >= |t|^-n} at the nonzero trajectory times."""
    dist = distance_function(lat, X)
    times, values = [], []
    for t, state in zip(traj.times, traj.states):
        if t == 0:
            continue
        outside = _outside_cone(dist, c, t)
        dens = np.abs(state.amplitudes[outside]) ** 2
        times.append(float(t))
        values.append(lat.cell_volume * int(np.count_nonzero(dens >= abs(t) ** (-n))))
    return TailSeries(np.array(times), np.array(values, dtype=float))


def markov_check(
    traj: StateTrajectory,
    X: RegionSet,
    c: float,
    n: int,
    lat: Lattice,
) -> InequalityReport:
    """measure(t) <= |t|^n tail_mass(t) at every nonzero sample."""
    measure = markov_tail_measure(traj, X, c, n, lat)
    tails = tail_mass_series(traj, X, c, lat)
    nonzero = tails.times != 0
    bound = np.abs(tails.times[nonzero]) ** n * tails.values[nonzero]
    margins = bound - measure.values
    tol = MARKOV_RTOL * max(1.0, float(bound.max(initial=0.0)))
    return InequalityReport.from_margins(
        "markov_tail",
        margins.tolist(),
        tolerance=tol,
        samples=measure.times.tolist(),
        smallest_C=float(measure.values.max(initial=0.0)),
        details={"n": n, "c": c},
    )
