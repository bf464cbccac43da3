"""Command-line entry point: ``lockinfer <subcommand> ...``.

Data goes to files or stdout; progress and diagnostics go to stderr. On
failure a single JSON line ``{"error": <type>, "message": <text>}`` is
written to stderr and the exit status is non-zero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attack import (
    AttackProfile,
    ConfigurationError,
    SchemaError,
    estimate_transitions,
    infer_key_deterministic,
    published_profile,
    phase_scores,
    rank_keys_exhaustive,
    rank_keys_lazy,
)
from .evaluation import (
    NOISE_MODELS,
    MetricError,
    length_analysis,
    monte_carlo_topr,
    paired_t_test,
    read_columns,
)
from .lockmodel import (
    CombinationKey,
    LockError,
    LockSpec,
    grid_key_set,
    implemented_key_set,
    load_key_set,
    resolve_spec,
)
from .recognition import (
    DEFAULT_MIN_SPINS,
    SpinProfile,
    detect_spins,
    detect_unlock_events,
    extract_event,
    learn_spin_profile,
)
from .regression import (
    AVERAGED,
    NEGATIVE,
    POSITIVE,
    STRATEGIES,
    fit_linear_models,
    load_training_pairs,
    save_training_pairs,
    strategy_sigmas,
)
from .segmentation import dump_segmentation, segment_phases, write_segments_csv
from .signal import GyroTrace, load_trace, save_trace
from .synth import (
    SynthConfig,
    covering_keys,
    learn_profile_spins,
    random_keys,
    read_labels,
    synthesize_day_trace,
    synthesize_training_pairs,
    synthesize_unlock_trace,
    write_labels,
)

log = logging.getLogger("lockinfer")


class CliError(Exception):
    """Bad arguments detected after parsing."""


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _strategy_list(text: str) -> list[str]:
    out = [v.strip() for v in text.split(",") if v.strip()]
    for v in out:
        if v not in STRATEGIES:
            raise argparse.ArgumentTypeError(f"unknown strategy {v!r}; choose from {STRATEGIES}")
    return out


def _load_profile(args, trace: GyroTrace | None = None, need_spins: bool = False) -> AttackProfile:
    """Profile from ``--profile`` or the published defaults for ``--lock``.

    When spin statistics are needed and missing, they are learned from
    synthetic unlocks at the trace's sample rate.
    """
    if getattr(args, "profile", None):
        path = Path(args.profile)
        if not path.is_file():
            raise CliError(f"profile {path} does not exist")
        profile = AttackProfile.load(path)
    else:
        spec = resolve_spec(args.lock)
        profile = published_profile(spec, start=_start(args, spec))
    if getattr(args, "start", None) is not None:
        from dataclasses import replace

        profile = replace(profile, start=profile.spec.check_start(args.start))
    if getattr(args, "strategy", None):
        profile = profile.with_strategy(args.strategy)
    if need_spins and profile.spin_profile is None:
        rate = trace.sample_rate_hz if trace is not None else 200.0
        log.info("learning spin statistics from synthetic unlocks at %.1f Hz", rate)
        profile = profile.with_spin_profile(
            learn_profile_spins(profile, config=SynthConfig(sample_rate_hz=rate), seed=args.seed)
        )
    return profile


def _start(args, spec: LockSpec) -> int:
    s = getattr(args, "start", None)
    return spec.start_default if s is None else spec.check_start(s)


def _read_trace(path) -> GyroTrace:
    if not Path(path).is_file():
        raise CliError(f"trace {path} does not exist")
    return load_trace(path)


def _event_trace(args, trace: GyroTrace, profile: AttackProfile) -> GyroTrace:
    """Restrict to one unlock: explicit bounds, detected event, or the whole trace."""
    if args.event_start is not None or args.event_end is not None:
        a = trace.t[0] if args.event_start is None else args.event_start
        b = trace.t[-1] if args.event_end is None else args.event_end
        i = int(np.searchsorted(trace.t, a, side="left"))
        j = int(np.searchsorted(trace.t, b, side="right"))
        if j - i < 3:
            raise CliError(f"event window [{a}, {b}] holds fewer than 3 samples")
        return trace.slice(i, j)
    if args.detect:
        events = detect_unlock_events(trace, profile.spin_profile)
        if not events:
            raise CliError("no unlock event detected in trace")
        if args.event_index >= len(events):
            raise CliError(f"event index {args.event_index} out of range ({len(events)} events)")
        ev = events[args.event_index]
        log.info("using event %d at %.2f-%.2f s", args.event_index, ev.start_t, ev.end_t)
        return extract_event(trace, ev, profile=profile.spin_profile)
    return trace


def _add_event_args(p):
    p.add_argument("--event-start", type=float, help="event start time (s)")
    p.add_argument("--event-end", type=float, help="event end time (s)")
    p.add_argument("--detect", action="store_true", help="locate the unlock with spin recognition first")
    p.add_argument("--event-index", type=int, default=0, help="which detected event to use (with --detect)")


def _add_profile_args(p, lock_default="padlock"):
    p.add_argument("--lock", default=lock_default, help="padlock, safe, or a JSON lock definition")
    p.add_argument("--profile", help="profile JSON written by 'train' (overrides --lock)")
    p.add_argument("--start", type=int, help="dial position before entry")
    p.add_argument("--strategy", type=_strategy_list, help="per-phase strategies, comma-separated")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    profile = _load_profile(args)
    spec = profile.spec
    noise = args.noise_sigma if args.noise_sigma else 0.0
    if isinstance(noise, list) and len(noise) == 1:
        noise = noise[0]
    cfg = SynthConfig(
        sample_rate_hz=args.sample_rate,
        noise_sigma=tuple(noise) if isinstance(noise, list) else noise,
        sensor_noise=args.sensor_noise,
        lead_seconds=args.lead,
        trail_seconds=args.lead,
        seed=args.seed,
    )
    if args.kind == "unlock":
        if not args.key:
            raise CliError("simulate unlock needs --key")
        key = spec.check_key(CombinationKey.parse(args.key))
        trace, gt = synthesize_unlock_trace(key, profile, cfg)
        save_trace(args.out, trace, comment=f"synthetic unlock lock={spec.name} key={key} seed={args.seed}")
        if args.labels:
            from .synth import Label

            a, b = gt.event_interval
            write_labels(args.labels, [Label("unlock", a, b, key)])
        if args.truth:
            Path(args.truth).write_text(json.dumps({
                "key": str(gt.key), "start": gt.start, "theta": list(gt.theta),
                "theta_observed": list(gt.theta_observed),
                "phase_boundaries": list(gt.phase_boundaries),
                "event_interval": list(gt.event_interval),
                "targets": [list(t) for t in gt.targets],
            }, indent=2) + "\n", encoding="utf-8")
        log.info("wrote %d samples to %s", len(trace), args.out)
    elif args.kind == "day":
        events = []
        for item in args.events or []:
            key_text, _, at = item.partition("@")
            if not at:
                raise CliError(f"event {item!r} must look like KEY@SECONDS")
            events.append((spec.check_key(CombinationKey.parse(key_text)), float(at)))
        from dataclasses import replace

        day_cfg = replace(cfg, sample_rate_hz=args.sample_rate if args.sample_rate_set else 50.0)
        trace, labels = synthesize_day_trace(
            events, args.confusers, profile, day_cfg,
            duration_seconds=args.duration, hard_confusers=args.hard_confusers,
        )
        save_trace(args.out, trace, comment=f"synthetic day lock={spec.name} seed={args.seed}")
        if args.labels:
            write_labels(args.labels, labels)
        log.info("wrote %d samples, %d labels", len(trace), len(labels))
    else:  # pairs
        rng = np.random.default_rng(args.seed)
        keys = covering_keys(spec, profile.start) if args.count is None else random_keys(spec, args.count, rng)
        pairs = synthesize_training_pairs(profile, keys, cfg)
        save_training_pairs(args.out, pairs)
        log.info("wrote %d training pairs to %s", len(pairs), args.out)
    return 0


def cmd_train(args) -> int:
    spec = resolve_spec(args.lock)
    if not Path(args.pairs).is_file():
        raise CliError(f"pairs file {args.pairs} does not exist")
    pairs = load_training_pairs(args.pairs)
    models = fit_linear_models(pairs)
    for i in range(1, spec.n_phases + 1):
        for sign in (POSITIVE, NEGATIVE):
            if (i, sign) not in models:
                raise ConfigurationError(f"training data has no {sign} samples for phase {i}")
    sigmas = strategy_sigmas(pairs, models)
    if args.strategy:
        strategy = tuple(args.strategy)
    else:
        strategy = tuple(
            min((s for s in (POSITIVE, NEGATIVE, AVERAGED) if (i, s) in sigmas), key=lambda s: sigmas[(i, s)])
            for i in range(1, spec.n_phases + 1)
        )
    profile = AttackProfile(spec, models, strategy, sigmas, None, _start(args, spec))

    if args.labeled_trace:
        if not args.labels:
            raise CliError("--labeled-trace needs --labels")
        labeled = []
        for tp, lp in zip(args.labeled_trace, args.labels):
            tr = _read_trace(tp)
            spans = [(lb.start_t, lb.end_t) for lb in read_labels(lp) if lb.kind == "unlock"]
            labeled.append((tr, spans))
        spin = learn_spin_profile(labeled, min_spins=DEFAULT_MIN_SPINS.get(spec.name, 5))
    else:
        log.info("no labelled traces given; learning spin statistics from synthetic unlocks")
        spin = learn_profile_spins(profile, config=SynthConfig(sample_rate_hz=args.sample_rate), seed=args.seed)
    profile = profile.with_spin_profile(spin)
    profile.save(args.out)
    for i in range(1, spec.n_phases + 1):
        log.info("phase %d strategy=%s sigma=%.3f", i, strategy[i - 1], profile.sigma(i))
    return 0


def cmd_detect(args) -> int:
    trace = _read_trace(args.trace)
    profile = _load_profile(args, trace, need_spins=True)
    spin: SpinProfile = profile.spin_profile
    if args.min_spins is not None:
        from dataclasses import replace

        spin = replace(spin, min_spins=args.min_spins)
    spins = detect_spins(trace, spin)
    events = detect_unlock_events(trace, spin, spins)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write("event_start,event_end,spin_count\n")
        for e in events:
            out.write(f"{e.start_t:.6f},{e.end_t:.6f},{e.spin_count}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    log.info("%d spin windows, %d unlock events", len(spins), len(events))
    return 0


def cmd_segment(args) -> int:
    trace = _read_trace(args.trace)
    profile = _load_profile(args, trace, need_spins=args.detect)
    sub = _event_trace(args, trace, profile)
    seg = segment_phases(sub, profile.spec)
    write_segments_csv(args.out, sub, seg)
    if args.dump:
        dump_segmentation(args.dump, sub, seg)
    print(",".join(f"{t:.6f}" for t in seg.boundary_times(sub)))
    return 0


def cmd_infer(args) -> int:
    trace = _read_trace(args.trace)
    profile = _load_profile(args, trace, need_spins=args.detect)
    sub = _event_trace(args, trace, profile)
    seg = segment_phases(sub, profile.spec)
    key, est = infer_key_deterministic(seg, profile)
    print(key)
    log.info("theta_bar=%s clamped=%s", ",".join(f"{v:.3f}" for v in est.theta_bar), est.clamped)
    return 0


def cmd_rank(args) -> int:
    trace = _read_trace(args.trace)
    profile = _load_profile(args, trace, need_spins=args.detect)
    spec = profile.spec
    chosen = sum(bool(v) for v in (args.restricted_4k, args.key_set, args.grid))
    if chosen > 1:
        raise CliError("choose at most one of --restricted-4k, --key-set, --grid")
    key_set = None
    if args.restricted_4k:
        key_set = implemented_key_set(spec, "rule")
    elif args.key_set:
        if not Path(args.key_set).is_file():
            raise CliError(f"key set {args.key_set} does not exist")
        key_set = load_key_set(args.key_set, spec)
    elif args.grid:
        key_set = grid_key_set(spec, step=args.grid_step, start=profile.start)
    sub = _event_trace(args, trace, profile)
    seg = segment_phases(sub, spec)
    est = estimate_transitions(seg.features, profile)
    scores = phase_scores(est, profile)
    if key_set is not None:
        ranked = rank_keys_exhaustive(scores, spec, profile.start, key_set).top(args.top_r)
    else:
        ranked = rank_keys_lazy(scores, spec, args.top_r, profile.start)
    ranked.write_csv(args.out)
    log.info("wrote %d ranked keys out of %d", len(ranked), ranked.key_space_size)
    return 0


def cmd_eval(args) -> int:
    spec = resolve_spec(args.lock)
    sigma = args.sigma
    if sigma is None:
        sigma = [published_profile(spec).sigma(i) for i in range(1, spec.n_phases + 1)]
    if len(sigma) != spec.n_phases:
        raise CliError(f"--sigma needs {spec.n_phases} values")
    space = args.key_space
    if space is None:
        space = "grid" if spec.n_phases > 3 else "full"
    if space == "4k":
        space = implemented_key_set(spec, "rule")
    elif space not in ("full", "grid"):
        if not Path(space).is_file():
            raise CliError(f"key set {space} does not exist")
        space = load_key_set(space, spec)
    log.info("running %d trials on %s space", args.trials, space if isinstance(space, str) else space.provenance)
    curve, details = monte_carlo_topr(
        spec, sigma, space, trials=args.trials, r_values=args.r, seed=args.seed,
        noise_model=args.noise_model, start=_start(args, spec), return_details=True,
    )
    curve.write_csv(args.out)
    if args.length_r is not None:
        ok = details.successful_keys(args.length_r)
        frac = length_analysis(ok, spec, _start(args, spec)) if len(ok) else float("nan")
        print(f"length_below_threshold,{frac:.6f},{len(ok)}")
    for r, s, f in curve.rows():
        log.info("r=%d success=%.5f factor=%.3f", r, s, f)
    return 0


def cmd_ttest(args) -> int:
    if not Path(args.csv).is_file():
        raise CliError(f"{args.csv} does not exist")
    a, b = read_columns(args.csv, args.columns)
    res = paired_t_test(a, b)
    print("t,p,df")
    print(f"{res.t:.10g},{res.p:.10g},{res.df}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lockinfer", description="Wrist-motion combination-lock inference")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help="seed for every random draw")
        return p

    p = add("simulate", cmd_simulate, "generate synthetic traces, labels or training pairs")
    p.add_argument("kind", choices=("unlock", "day", "pairs"))
    _add_profile_args(p)
    p.add_argument("--key", help="key for 'unlock', e.g. 10-30-0")
    p.add_argument("--events", nargs="*", help="KEY@SECONDS items for 'day'")
    p.add_argument("--confusers", type=int, default=3)
    p.add_argument("--hard-confusers", action="store_true")
    p.add_argument("--duration", type=float, default=86400.0, help="day-trace length (s)")
    p.add_argument("--count", type=int, help="random keys for 'pairs' (default: covering set)")
    p.add_argument("--sample-rate", type=float, default=None)
    p.add_argument("--noise-sigma", type=_float_list, help="theta noise per phase (units)")
    p.add_argument("--sensor-noise", type=float, default=0.0, help="additive gyro noise (rad/s)")
    p.add_argument("--lead", type=float, default=0.0, help="idle seconds before and after an unlock")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="sidecar labels CSV")
    p.add_argument("--truth", help="ground-truth JSON for 'unlock'")

    p = add("train", cmd_train, "fit linear models and spin statistics into a profile")
    p.add_argument("--pairs", required=True, help="CSV phase,sign,theta,alpha")
    p.add_argument("--lock", default="padlock")
    p.add_argument("--start", type=int)
    p.add_argument("--strategy", type=_strategy_list)
    p.add_argument("--labeled-trace", nargs="*", help="traces with unlock labels for spin statistics")
    p.add_argument("--labels", nargs="*", help="label files matching --labeled-trace")
    p.add_argument("--sample-rate", type=float, default=200.0, help="rate for synthetic spin learning")
    p.add_argument("--out", required=True)

    p = add("detect", cmd_detect, "find unlock events in a trace")
    p.add_argument("trace")
    _add_profile_args(p)
    p.add_argument("--min-spins", type=int)
    p.add_argument("--out")

    p = add("segment", cmd_segment, "split an unlock into phases")
    p.add_argument("trace")
    _add_profile_args(p)
    _add_event_args(p)
    p.add_argument("--out", required=True, help="per-phase features CSV")
    p.add_argument("--dump", help="debug CSV of the smoothed slowdown series")

    p = add("infer", cmd_infer, "deterministic key inference")
    p.add_argument("trace")
    _add_profile_args(p)
    _add_event_args(p)

    p = add("rank", cmd_rank, "probabilistic top-r key ranking")
    p.add_argument("trace")
    _add_profile_args(p)
    _add_event_args(p)
    p.add_argument("--top-r", type=int, default=50)
    p.add_argument("--restricted-4k", action="store_true", help="rank only the factory padlock set")
    p.add_argument("--key-set", help="rank only keys listed in this file")
    p.add_argument("--grid", action="store_true", help="rank only the evenly spaced grid")
    p.add_argument("--grid-step", type=int, default=5)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "Monte Carlo top-r success curve")
    p.add_argument("--lock", default="padlock")
    p.add_argument("--start", type=int)
    p.add_argument("--sigma", type=_float_list, help="per-phase deviations (default: published)")
    p.add_argument("--key-space", help="full, grid, 4k or a key-list file (default: full; grid for 4 phases)")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--r", type=_int_list, help="r values (default: 1,2,5,10,...)")
    p.add_argument("--noise-model", choices=NOISE_MODELS, default="constant")
    p.add_argument("--length-r", type=int, help="also report the short-key fraction among successes at this r")
    p.add_argument("--out", required=True)

    p = add("ttest", cmd_ttest, "paired two-tailed t-test on two CSV columns")
    p.add_argument("csv")
    p.add_argument("--columns", type=lambda s: s.split(","), help="two column names (default: first two)")
    return parser


_EXPECTED_ERRORS = (
    CliError, LockError, SchemaError, ConfigurationError, MetricError, ValueError, OSError, KeyError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose + 1, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if hasattr(args, "sample_rate") and args.command == "simulate":
        args.sample_rate_set = args.sample_rate is not None
        if args.sample_rate is None:
            args.sample_rate = 200.0
    try:
        return args.func(args)
    except _EXPECTED_ERRORS as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
