from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .config import CheckConfig, ScenarioConfig, config_hash, dump_config
from .cutoff import CutoffFunction, combine_cutoffs, make_cutoff, tabulate_cutoff
from .errors import DivergenceError, HypothesisError
from .kernelop import NonlocalOperator, SpeedBounds, assemble_operator, speed_bounds
from .lattice import (
    Lattice,
    RealField,
    RegionSet,
    State,
    build_lattice,
    coordinate_field,
    distance_function,
    gaussian_state,
    region_from_box,
    restrict_state,
)
from .ledger import RunLedger
from .models import DecayFit, InequalityReport, RunManifest
from .opcalc import (
    AstloFamily,
    commutator_expansion,
    expansion_report,
    kernel_commutator,
    remainder_scaling,
    spectral_projection,
)
from .propagate import (
    PotentialSpec,
    StateTrajectory,
    default_time_step,
    evolve_autonomous,
    evolve_nls,
    evolve_nonautonomous,
)
from .util.failure_bundle import create_failure_bundle
from .util.tables import write_csv, write_json
from .verify import (
    ProofParameters,
    commutator_bound_check,
    decay_report,
    duality_check,
    envelope_check,
    hs_backend_check,
    lightcone_decay_fit,
    main_inequality_check,
    markov_check,
    maximal_velocity_check,
    positivity_preservation_check,
    proof_parameters,
    randomized_sandwich_check,
    rme_check,
    soliton_speed_test,
    stability_verdict,
    strichartz_norm,
    tail_mass_series,
)


logger = logging.getLogger(__name__)

STAGES = ("assemble", "bounds", "cutoffs", "propagate", "checks")
# Checks that need a light-cone speed c > kappa resolved in the bounds stage.
SPEED_CHECKS = frozenset(
    {
        "sandwich",
        "commutator_bound",
        "rme",
        "envelope",
        "main_inequality",
        "maximal_velocity",
        "lightcone_decay",
        "strichartz",
        "markov",
    }
)
SANDWICH_TIMES = 20
RME_TIMES = 6
COMMUTATOR_TIMES = 4
POSITIVITY_TIMES = 5
SLOPE_TOLERANCE = 0.2
SPREAD_LIMIT = 10.0
RECONSTRUCTION_TOLERANCE = 1e-9
CHAIN_SLACK = 1e-10


@dataclass
class RunContext:
    """Everything the stages build, shared read-only by the checks."""

    config: ScenarioConfig
    lattice: Optional[Lattice] = None
    operator: Optional[NonlocalOperator] = None
    phi: Optional[RealField] = None
    region: Optional[RegionSet] = None
    bounds: Optional[SpeedBounds] = None
    speeds: dict[str, float] = field(default_factory=dict)
    chi: Optional[CutoffFunction] = None
    xi: Optional[CutoffFunction] = None
    potential: Optional[PotentialSpec] = None
    psi0: Optional[State] = None
    trajectory: Optional[StateTrajectory] = None
    dt: Optional[float] = None
    # same scenario at 2N, built before the checks when one of them asks for refinement
    refined: Optional["RunContext"] = None

    @property
    def kappa(self) -> float:
        return self.bounds.kappa_1 if self.bounds is not None else 0.0

    @property
    def times(self) -> np.ndarray:
        dyn = self.config.dynamics
        return np.linspace(0.0, dyn.t_max, dyn.samples)

    def seed_for(self, index: int) -> int:
        # Independent of scheduling order, so threaded runs stay reproducible.
        return int(np.random.SeedSequence([self.config.seed, index]).generate_state(1)[0])


@dataclass
class CheckOutcome:
    report: InequalityReport
    fit: Optional[DecayFit] = None
    # (times, values) for the tail-mass plot, (times, observed, bound) for the envelope plot
    tail_series: Optional[tuple[list[float], list[float]]] = None
    envelope: Optional[tuple[list[float], list[float], list[float]]] = None


class _ArtifactWriter:
    """Single writer for the run directory; keeps the inventory for the manifest."""

    def __init__(self, run_dir: Path, formats: Sequence[str]) -> None:
        self.run_dir = run_dir
        self.formats = set(formats)
        self.files: set[str] = set()

    def _track(self, path: Path) -> Path:
        self.files.add(path.relative_to(self.run_dir).as_posix())
        return path

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def csv(self, name: str, header: Sequence[str], rows) -> Optional[Path]:
        if "csv" not in self.formats:
            return None
        return self._track(write_csv(self.path(name), header, rows))

    def json(self, name: str, payload: Any) -> Optional[Path]:
        if "json" not in self.formats:
            return None
        return self._track(write_json(self.path(name), payload))

    def add(self, path: Union[str, Path]) -> Path:
        return self._track(Path(path))


# --- stages ---------------------------------------------------------------------------


def _stage_assemble(ctx: RunContext, out: _ArtifactWriter) -> None:
    cfg = ctx.config
    lat_cfg = cfg.lattice
    ctx.lattice = build_lattice(lat_cfg.dim, lat_cfg.half_width, lat_cfg.points_per_axis, lat_cfg.boundary)
    ctx.operator = assemble_operator(ctx.lattice, cfg.kernel, workers=cfg.threads)
    logger.info(
        "Assembled %s kernel on %d sites (boundary=%s h=%.4g)",
        cfg.kernel.family.value,
        ctx.lattice.site_count,
        lat_cfg.boundary.value,
        ctx.lattice.spacing,
    )


def _reference(ctx: RunContext) -> tuple[RealField, RegionSet]:
    ref = ctx.config.reference
    lat = ctx.lattice
    if ref.kind == "region":
        X = region_from_box(lat, ref.lower, ref.upper)
        if X.is_empty:
            raise ValueError(f"reference box {ref.lower}..{ref.upper} contains no lattice site")
        return distance_function(lat, X), X
    if ref.kind == "coordinate":
        phi = coordinate_field(lat, ref.axis).shifted(ref.offset)
    else:
        phi = RealField(np.asarray(ref.values, dtype=float))
    X = RegionSet(phi.values <= 0, "phi <= 0")
    return phi, X


def _resolve_speed(check: CheckConfig, kappa: float) -> float:
    if check.c is not None:
        c = float(check.c)
    elif kappa > 0:
        c = check.c_ratio * kappa
    else:
        c = 1.0
    if not (c > kappa):
        raise HypothesisError(f"checks[{check.name}].c={c} must exceed kappa={kappa}", check=check.name, c=c, kappa=kappa)
    return c


def _stage_bounds(ctx: RunContext, out: _ArtifactWriter) -> None:
    cfg = ctx.config
    ctx.phi, ctx.region = _reference(ctx)
    n_max = max([cfg.cutoff.n, *[c.n for c in cfg.checks]])
    ctx.bounds = speed_bounds(ctx.operator, ctx.phi, n_max)
    for check in cfg.checks:
        if check.kind in SPEED_CHECKS or (check.kind == "soliton" and check.c is not None):
            ctx.speeds[check.name] = _resolve_speed(check, ctx.kappa)
    logger.info("Speed bounds kappa_1=%.6g M=%.6g L=%.4g speeds=%s", ctx.kappa, ctx.bounds.M, ctx.bounds.lipschitz, ctx.speeds)
    out.json("speed_bounds.json", {**ctx.bounds.as_dict(), "speeds": dict(sorted(ctx.speeds.items()))})


def _stage_cutoffs(ctx: RunContext, out: _ArtifactWriter) -> None:
    cut = ctx.config.cutoff
    ctx.chi = make_cutoff(cut.delta, cut.n, family=cut.family, bump_exponent=cut.bump_exponent)
    ctx.xi = combine_cutoffs(ctx.chi, ctx.chi, 1.0)
    if "csv" in out.formats:
        out.add(tabulate_cutoff(ctx.chi, out.path("cutoff.csv")))


def _build_potential(ctx: RunContext) -> PotentialSpec:
    dyn = ctx.config.dynamics
    coords = ctx.lattice.coordinates
    if dyn.potential == "static":
        return PotentialSpec.static(RealField(dyn.amplitude * np.cos(dyn.frequency * coords[:, 0])))
    if dyn.potential == "time_dependent":
        envelope = np.exp(-np.sum(coords**2, axis=1))

        def V(t: float) -> RealField:
            return RealField(dyn.amplitude * math.cos(dyn.frequency * t) * envelope)

        return PotentialSpec.time_dependent(V, bound=dyn.potential_bound)
    if dyn.potential == "nls":
        return PotentialSpec.nls(None, _nonlinearity(ctx))
    return PotentialSpec.none()


def _nonlinearity(ctx: RunContext) -> Callable[[np.ndarray], np.ndarray]:
    coupling = ctx.config.dynamics.coupling if ctx.config.dynamics.potential == "nls" else 0.0

    def f(rho: np.ndarray) -> np.ndarray:
        return coupling * rho

    return f


def _initial_center(ctx: RunContext) -> list[float]:
    cfg = ctx.config
    init = cfg.dynamics.initial
    if init.center is not None:
        return list(init.center)
    ref = cfg.reference
    if ref.kind == "region":
        return [0.5 * (lo + hi) for lo, hi in zip(ref.lower, ref.upper)]
    if ref.kind == "coordinate":
        center = [0.0] * cfg.lattice.dim
        center[ref.axis] = ref.offset - 3.0 * init.width
        return center
    return ctx.lattice.coordinates[int(np.argmin(ctx.phi.values))].tolist()


def _stage_propagate(ctx: RunContext, out: _ArtifactWriter) -> None:
    cfg = ctx.config
    dyn = cfg.dynamics
    lat = ctx.lattice
    ctx.potential = _build_potential(ctx)
    ctx.psi0 = gaussian_state(lat, _initial_center(ctx), dyn.initial.width, dyn.initial.momentum)
    ctx.dt = dyn.dt if dyn.dt is not None else default_time_step(ctx.operator)
    times = ctx.times
    if dyn.potential == "none":
        traj = evolve_autonomous(ctx.operator, ctx.psi0, times)
    elif dyn.potential == "nls":
        traj = evolve_nls(ctx.operator, None, _nonlinearity(ctx), ctx.psi0, dyn.t_max, ctx.dt, times)
    else:
        traj = evolve_nonautonomous(ctx.operator, ctx.potential, ctx.psi0, dyn.t_max, ctx.dt, times)
    ctx.trajectory = traj
    drift = float(traj.norm_drift().max(initial=0.0))
    logger.info("Propagated %s (samples=%d dt=%.3g max norm drift=%.3e)", traj.method.value, len(traj), ctx.dt, drift)
    if "csv" in out.formats:
        out.add(traj.to_csv(out.path("trajectory.csv"), {"mass_X": traj.mass(ctx.region, lat)}))


# --- checks ---------------------------------------------------------------------------


def _subsample(times: Sequence[float], count: int, *, positive: bool = True) -> list[float]:
    ts = [float(t) for t in times if (t > 0 or not positive)]
    if len(ts) <= count:
        return ts
    idx = np.unique(np.linspace(0, len(ts) - 1, count).round().astype(int))
    return [ts[i] for i in idx]


def _envelope_scale(ctx: RunContext, params: ProofParameters) -> float:
    """s = (f(t_max) - c' t_max)/delta for f(t) = c|t|; 2 t_max under the default split."""
    return (params.c - params.c_prime) * ctx.config.dynamics.t_max / params.delta


def _check_speed_bounds(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    b = speed_bounds(ctx.operator, ctx.phi, check.n)
    margins, samples = [], []
    for p in range(1, check.n + 2):
        kappa_p, moment = b.kappa[p - 1], b.moments[p - 1]
        ad_norm = float(np.linalg.norm(kernel_commutator(ctx.operator, ctx.phi, p), 2))
        margins.append(kappa_p * (1.0 + CHAIN_SLACK) + CHAIN_SLACK - ad_norm)
        margins.append(b.lipschitz**p * moment * (1.0 + CHAIN_SLACK) + CHAIN_SLACK - kappa_p)
        samples.extend([float(p), float(p)])
    report = InequalityReport.from_margins("speed_bounds", margins, tolerance=0.0, samples=samples, details=b.as_dict())
    return CheckOutcome(report)


def _check_hs(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    return CheckOutcome(hs_backend_check(check.trials, seed))


def _check_expansion(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    scales = tuple(float(s) for s in (check.scales or (4.0, 16.0, 64.0, 256.0, 1024.0)))
    study = remainder_scaling(ctx.operator, ctx.phi, ctx.chi, check.n, scales, check.side)
    s0 = scales[0]
    family = AstloFamily(ctx.phi.shifted(-0.5 * s0 * ctx.chi.delta), ctx.chi, 0.0, s0)
    expansion = expansion_report(commutator_expansion(ctx.operator, family, 0.0, check.n, check.side, with_ceiling=True))
    target = -(check.n + 1)
    margins = [
        SLOPE_TOLERANCE - abs(study.slope - target),
        SPREAD_LIMIT - study.remainder_spread,
        expansion.ceiling * (1.0 + 1e-9) - expansion.remainder_norm,
        RECONSTRUCTION_TOLERANCE - expansion.reconstruction_error,
    ]
    report = InequalityReport.from_margins(
        "expansion",
        margins,
        tolerance=0.0,
        samples=[float(s0)] * len(margins),
        details={
            "side": check.side,
            "slope": study.slope,
            "target_slope": target,
            "scales": list(study.scales),
            "truncation_norms": list(study.truncation_norms),
            "remainder_norms": list(study.remainder_norms),
            "remainder_spread": study.remainder_spread,
            "first_scale": expansion.model_dump(mode="json"),
        },
    )
    return CheckOutcome(report)


def _check_sandwich(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    c = ctx.speeds[check.name]
    params = proof_parameters(ctx.kappa, c, check.delta)
    times = np.linspace(0.0, ctx.config.dynamics.t_max, SANDWICH_TIMES)

    def f_height(t: float) -> float:
        return c * abs(t) + 1.0

    report = randomized_sandwich_check(
        ctx.lattice, ctx.chi, ctx.xi, f_height, params.c_prime, times, check.trials, seed, phi=ctx.phi
    )
    return CheckOutcome(report)


def _family(ctx: RunContext, check: CheckConfig, speed: float) -> AstloFamily:
    params = proof_parameters(ctx.kappa, ctx.speeds[check.name], check.delta)
    return AstloFamily(ctx.phi, ctx.chi, speed, _envelope_scale(ctx, params))


def _check_commutator(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    family = _family(ctx, check, ctx.speeds[check.name])
    times = _subsample(ctx.times, COMMUTATOR_TIMES, positive=False)
    return CheckOutcome(commutator_bound_check(ctx.operator, family, ctx.xi, check.n, times, check.scales))


def _rme_report(ctx: RunContext, check: CheckConfig) -> InequalityReport:
    family = _family(ctx, check, ctx.speeds[check.name])
    times = _subsample(ctx.times, RME_TIMES)
    return rme_check(ctx.operator, ctx.potential, family, ctx.xi, check.n, times, ctx.dt)


def _with_refinement(
    report: InequalityReport, ctx: RunContext, coarse: Optional[float], fine: Optional[float], stable: bool
) -> InequalityReport:
    details = {
        **report.details,
        "refined_points": ctx.refined.config.lattice.points_per_axis,
        "refined_value": fine,
        "refinement_stable": stable,
    }
    logger.info("Refinement %s: %s at N against %s at 2N (stable=%s)", report.name, coarse, fine, stable)
    return report.model_copy(update={"stable": report.stable is not False and stable, "details": details})


def _check_rme(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    report = _rme_report(ctx, check)
    if check.refine:
        fine = _rme_report(ctx.refined, check).smallest_C
        stable = stability_verdict([report.smallest_C, fine])
        report = _with_refinement(report, ctx, report.smallest_C, fine, stable)
    return CheckOutcome(report)


def _check_envelope(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    c = ctx.speeds[check.name]
    params = proof_parameters(ctx.kappa, c, check.delta)
    family = _family(ctx, check, params.c_prime)
    # the sweep covers s = t_max and s = 2 t_max
    t_max = ctx.config.dynamics.t_max
    factors = [f for f in (t_max / family.scale_s, 2.0 * t_max / family.scale_s) if not math.isclose(f, 1.0)]
    report = envelope_check(ctx.trajectory, family, ctx.xi, check.n, check.C_V, stability_factors=factors)
    observed = [float(v) for v in report.details["observed"]]
    bound = [o + m for o, m in zip(observed, report.margins)]
    return CheckOutcome(report, envelope=(list(report.samples), observed, bound))


def _check_main(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    report = main_inequality_check(
        ctx.operator,
        ctx.potential,
        ctx.phi,
        ctx.speeds[check.name],
        check.n,
        ctx.times,
        C_V=check.C_V,
        variants=check.variants,
        shift_b=check.shift_b,
        dt=ctx.dt,
    )
    return CheckOutcome(report)


def _check_velocity(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    report = maximal_velocity_check(
        ctx.operator, ctx.potential, ctx.phi, ctx.speeds[check.name], check.n, ctx.times, dt=ctx.dt
    )
    return CheckOutcome(report)


def _fit_window(ctx: RunContext, check: CheckConfig) -> tuple[float, float]:
    t_max = ctx.config.dynamics.t_max
    return tuple(check.fit_window) if check.fit_window is not None else (0.25 * t_max, t_max)


def _decay_fit(ctx: RunContext, check: CheckConfig) -> DecayFit:
    c = ctx.speeds[check.name]
    window = _fit_window(ctx, check)
    return lightcone_decay_fit(ctx.trajectory, ctx.region, c, check.n, window, ctx.lattice, distance=_distance(ctx))


def _exponents_agree(coarse: DecayFit, fine: DecayFit) -> bool:
    if coarse.fitted_exponent is None or fine.fitted_exponent is None:
        return coarse.status == fine.status
    return stability_verdict([abs(coarse.fitted_exponent), abs(fine.fitted_exponent)])


def _check_decay(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    c = ctx.speeds[check.name]
    fit = _decay_fit(ctx, check)
    series = tail_mass_series(ctx.trajectory, ctx.region, c, ctx.lattice, distance=_distance(ctx))
    report = decay_report(fit, check.n)
    report = report.model_copy(update={"details": {**report.details, "c": c, "sup_scaled": fit.sup_scaled}})
    if check.refine:
        fine = _decay_fit(ctx.refined, check)
        report = _with_refinement(report, ctx, fit.fitted_exponent, fine.fitted_exponent, _exponents_agree(fit, fine))
    return CheckOutcome(report, fit=fit, tail_series=(series.times.tolist(), series.values.tolist()))


def _distance(ctx: RunContext) -> Optional[RealField]:
    return ctx.phi if ctx.config.reference.kind == "region" else None


def _check_strichartz(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    c = ctx.speeds[check.name]
    p = check.strichartz_exponent
    t_end = float(ctx.trajectory.times[-1])
    try:
        full = strichartz_norm(ctx.trajectory, ctx.region, c, p, check.n, ctx.lattice, distance=_distance(ctx))
        halved = strichartz_norm(
            ctx.trajectory, ctx.region, c, p, check.n, ctx.lattice, t_end=0.5 * t_end, distance=_distance(ctx)
        )
    except DivergenceError as e:
        logger.warning("Strichartz tail extrapolation diverges for %s: %s", check.name, e)
        report = InequalityReport.from_margins(
            "strichartz", [math.nan], tolerance=0.0, samples=[t_end], details={"error": str(e), **e.details}
        )
        return CheckOutcome(report)
    stable = stability_verdict([full, halved])
    report = InequalityReport.from_margins(
        "strichartz",
        [0.0 if math.isfinite(full) else math.nan],
        tolerance=0.0,
        samples=[t_end],
        smallest_C=full,
        stable=stable,
        details={"p": check.strichartz_exponent, "c": c, "norm": full, "norm_half_window": halved},
    )
    return CheckOutcome(report)


def _check_markov(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    return CheckOutcome(markov_check(ctx.trajectory, ctx.region, ctx.speeds[check.name], check.n, ctx.lattice))


def _check_soliton(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    profile = restrict_state(ctx.psi0, ctx.region, ctx.lattice)
    report = soliton_speed_test(
        profile,
        ctx.region,
        check.beta,
        ctx.operator,
        check.n,
        ctx.config.dynamics.t_max,
        c=ctx.speeds.get(check.name),
        nonlinearity=_nonlinearity(ctx),
        dt=ctx.dt,
    )
    return CheckOutcome(report)


def _check_positivity(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    times = _subsample(ctx.times, POSITIVITY_TIMES)
    return CheckOutcome(
        positivity_preservation_check(ctx.operator, ctx.potential, times, count=check.trials, seed=seed, dt=ctx.dt)
    )


def _check_duality(ctx: RunContext, check: CheckConfig, seed: int) -> CheckOutcome:
    obs = spectral_projection(ctx.phi, 0.0)
    return CheckOutcome(duality_check(ctx.operator, ctx.potential, ctx.psi0, obs, ctx.times, dt=ctx.dt))


CHECK_RUNNERS: dict[str, Callable[[RunContext, CheckConfig, int], CheckOutcome]] = {
    "speed_bounds": _check_speed_bounds,
    "hs_crosscheck": _check_hs,
    "expansion": _check_expansion,
    "sandwich": _check_sandwich,
    "commutator_bound": _check_commutator,
    "rme": _check_rme,
    "envelope": _check_envelope,
    "main_inequality": _check_main,
    "maximal_velocity": _check_velocity,
    "lightcone_decay": _check_decay,
    "strichartz": _check_strichartz,
    "markov": _check_markov,
    "soliton": _check_soliton,
    "positivity": _check_positivity,
    "duality": _check_duality,
}


def _run_one(ctx: RunContext, index: int, check: CheckConfig) -> CheckOutcome:
    t0 = time.time()
    outcome = CHECK_RUNNERS[check.kind](ctx, check, ctx.seed_for(index))
    report = outcome.report.model_copy(update={"name": check.name})
    logger.info(
        "Check %s (%s) ok=%s worst_margin=%s C=%s (seconds=%.2f)",
        check.name,
        check.kind,
        report.ok,
        report.worst_margin,
        report.smallest_C,
        time.time() - t0,
    )
    outcome.report = report
    return outcome


def _refined_context(ctx: RunContext) -> RunContext:
    """Assemble and propagate the scenario again at twice the points per axis; no artifacts are written."""
    cfg = ctx.config
    lattice = cfg.lattice.model_copy(update={"points_per_axis": 2 * cfg.lattice.points_per_axis})
    fine = RunContext(cfg.model_copy(update={"lattice": lattice}))
    sink = _ArtifactWriter(Path("."), ())
    _stage_assemble(fine, sink)
    _stage_bounds(fine, sink)
    # keep the speeds of the base lattice so both fits see the same cone
    for name, c in ctx.speeds.items():
        if not (c > fine.kappa):
            raise HypothesisError(f"checks[{name}].c={c} must exceed the refined kappa={fine.kappa}", c=c, kappa=fine.kappa)
    fine.speeds = dict(ctx.speeds)
    _stage_cutoffs(fine, sink)
    _stage_propagate(fine, sink)
    return fine


def _stage_checks(ctx: RunContext, out: _ArtifactWriter, plots: bool, reports: dict[str, InequalityReport]) -> None:
    """Runs every check on the pool; reports of the checks that finished are kept even when others raise."""
    checks = ctx.config.checks
    outcomes: dict[str, CheckOutcome] = {}
    failures: list[tuple[str, BaseException]] = []
    if any(check.refine for check in checks):
        ctx.refined = _refined_context(ctx)
    with ThreadPoolExecutor(max_workers=ctx.config.threads) as pool:
        futures = [(check, pool.submit(_run_one, ctx, i, check)) for i, check in enumerate(checks)]
        for check, fut in futures:
            try:
                outcomes[check.name] = fut.result()
            except Exception as e:
                logger.error("Check %s (%s) raised: %s", check.name, check.kind, e)
                failures.append((check.name, e))

    reports.update((name, o.report) for name, o in outcomes.items())
    _write_check_artifacts(ctx, out, outcomes, plots)
    if failures:
        name, err = failures[0]
        raise RuntimeError(f"{len(failures)} check(s) raised; first: {name}: {err}") from err


def _write_check_artifacts(ctx: RunContext, out: _ArtifactWriter, outcomes: dict[str, CheckOutcome], plots: bool) -> None:
    for name, o in outcomes.items():
        r = o.report
        out.csv(f"checks/{name}.csv", ["sample", "margin"], zip(r.samples, r.margins))

    decay_rows = []
    for name, o in outcomes.items():
        if o.fit is None:
            continue
        lo, hi = o.fit.fit_window
        for t, v in zip(*o.tail_series):
            decay_rows.append([name, t, v, lo <= t <= hi])
    if decay_rows:
        out.csv("decay_fit.csv", ["check", "time", "tail_mass", "in_window"], decay_rows)

    if outcomes:
        out.json("reports.json", {name: o.report.model_dump(mode="json") for name, o in sorted(outcomes.items())})

    if not plots:
        return
    from .plots import envelope_plot, tail_mass_plot

    decay = next((o for o in outcomes.values() if o.tail_series is not None), None)
    if decay is not None:
        times, values = decay.tail_series
        n = int(decay.report.details.get("n", ctx.config.check(decay.report.name).n))
        out.add(tail_mass_plot(times, values, n, out.path("tail_mass.svg"), decay.fit))
    env = next((o for o in outcomes.values() if o.envelope is not None), None)
    if env is not None:
        out.add(envelope_plot(*env.envelope, out.path("envelope.svg")))


# --- driver ---------------------------------------------------------------------------


def _write_timings(out: _ArtifactWriter, seconds: dict[str, float]) -> None:
    lines = [f"{stage}\t{seconds[stage]:.3f}" for stage in STAGES if stage in seconds]
    path = out.path("timings.txt")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    out.add(path)


def _finish(
    cfg: ScenarioConfig,
    out: _ArtifactWriter,
    reports: dict[str, InequalityReport],
    seconds: dict[str, float],
    failure: Optional[str],
) -> RunManifest:
    summary = {name: r.ok for name, r in sorted(reports.items())}
    _write_timings(out, seconds)
    out.files.add("manifest.json")
    manifest = RunManifest(
        scenario=cfg.name,
        config_hash=config_hash(cfg),
        tool_version=__version__,
        seed=cfg.seed,
        files=sorted(out.files),
        summary=summary,
        ok=failure is None and all(summary.values()),
        failure=failure,
        stage_seconds=seconds,
    )
    write_json(out.path("manifest.json"), manifest.model_dump(mode="json"))
    return manifest


def run_scenario(
    config: ScenarioConfig,
    *,
    out_dir: Optional[Union[str, Path]] = None,
    plots: Optional[bool] = None,
) -> RunManifest:
    """
    assemble -> bounds -> cutoffs -> propagate -> checks, writing artifacts under <out_dir>/<name>/.

    A stage failure does not raise: the manifest records the partial inventory and the cause,
    and a failure bundle is written next to the run directory.
    """
    cfg = config
    run_dir = Path(out_dir if out_dir is not None else cfg.output.directory) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    out = _ArtifactWriter(run_dir, cfg.output.formats)
    want_plots = cfg.output.plots if plots is None else bool(plots)
    out.add(dump_config(cfg, run_dir / "config.yaml"))

    ledger = RunLedger(cfg.ledger.db_path) if cfg.ledger.enabled else None
    run_id = ledger.record_run_start(cfg.name, config_hash(cfg), str(run_dir)) if ledger is not None else None
    logger.info("Run started (scenario=%s run_id=%s checks=%d dir=%s)", cfg.name, run_id, len(cfg.checks), run_dir)

    ctx = RunContext(cfg)
    seconds: dict[str, float] = {}
    reports: dict[str, InequalityReport] = {}
    failure: Optional[str] = None
    t_run = time.time()
    stage = STAGES[0]
    try:
        for stage, fn in (
            ("assemble", _stage_assemble),
            ("bounds", _stage_bounds),
            ("cutoffs", _stage_cutoffs),
            ("propagate", _stage_propagate),
        ):
            t0 = time.time()
            fn(ctx, out)
            seconds[stage] = time.time() - t0
            logger.info("Stage %s complete (seconds=%.2f)", stage, seconds[stage])
        stage = "checks"
        t0 = time.time()
        try:
            _stage_checks(ctx, out, want_plots, reports)
        finally:
            seconds[stage] = time.time() - t0
        logger.info("Stage checks complete (seconds=%.2f)", seconds[stage])
    except Exception as e:
        failure = f"{stage}: {type(e).__name__}: {e}"
        logger.exception("Run failed in stage %s (seconds=%.2f)", stage, time.time() - t_run)

    manifest = _finish(cfg, out, reports, seconds, failure)

    if ledger is not None:
        try:
            for report in reports.values():
                ledger.record_check(run_id, report)
            ledger.record_run_finish(run_id, ok=manifest.ok, message=failure)
        finally:
            ledger.close()

    if failure is not None:
        try:
            bundle = create_failure_bundle(
                artifact_dir=str(run_dir),
                log_file=cfg.logging.file_path,
                out_dir=str(run_dir.parent),
                scenario=cfg.name,
            )
            logger.error("Wrote failure bundle: %s", bundle)
        except Exception:
            logger.debug("Failed to create failure bundle.", exc_info=True)

    logger.info(
        "Run finished (scenario=%s ok=%s passed=%d/%d seconds=%.2f)",
        cfg.name,
        manifest.ok,
        manifest.checks_passed,
        manifest.checks_total,
        time.time() - t_run,
    )
    return manifest
