"""Command-line interface.

Subcommands: fit, loglik, states, sample, gof, benchmark, simulate.
Models are JSON documents; tabular outputs are CSV.  Every randomized
subcommand takes an explicit 64-bit --seed and is byte-reproducible from
(inputs, flags, seed).  POHMM_THREADS caps internal parallelism (unset or
1 = serial, 0 = all cores); results do not depend on it.
"""

import argparse
import csv
import json
import sys

import numpy as np

from . import biometric, dataset, estimation, gof, model, simulation
from .event_chain import EventAlphabet
from .model import NumericalError
from .util import master_rng

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INPUT = 2


def _add_fit_flags(p):
    p.add_argument("--states", type=int, default=2, help="hidden states per event type")
    p.add_argument("--emission", choices=("lognormal", "normal"), default="lognormal")
    p.add_argument("--epsilon", type=float, default=1e-6, help="loglik stopping tolerance")
    p.add_argument("--max-iter", type=int, default=1000)
    smoothing = p.add_mutually_exclusive_group()
    smoothing.add_argument("--smoothing", dest="smoothing", action="store_true", default=True)
    smoothing.add_argument("--no-smoothing", dest="smoothing", action="store_false")
    p.add_argument("--pseudocount", type=float, default=0.0, help="event-chain additive smoothing")
    p.add_argument("--truncate", type=int, default=None, help="keep first K keystrokes per session")


def _fit_config(args):
    return estimation.FitConfig(
        n_states=args.states,
        kind=args.emission,
        epsilon=args.epsilon,
        max_iter=args.max_iter,
        smoothing=args.smoothing,
        pseudocount=args.pseudocount,
    )


def _load_sequences(path, truncate):
    events = dataset.load_csv(path)
    seqs = dataset.to_sequences(events, max_keystrokes=truncate)
    if not seqs:
        raise ValueError("no usable sequences in input")
    return seqs


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(c)) if isinstance(c, float) else c for c in row])


def cmd_fit(args):
    seqs = _load_sequences(args.input, args.truncate)
    alphabet = EventAlphabet.from_labels([lab for s in seqs for lab in s.labels])
    encoded = [s.encode(alphabet) for s in seqs]
    params, report = estimation.fit(encoded, alphabet, _fit_config(args))
    model.save(params, args.model_out)
    report_path = args.report_out or args.model_out + ".report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "iterations": report.iterations,
                "converged": report.converged,
                "final_loglik": report.final_loglik,
                "loglik_trace": report.loglik_trace,
            },
            fh,
            sort_keys=True,
            indent=1,
        )
        fh.write("\n")
    print(
        f"fit: {len(encoded)} sequences, {alphabet.size} event types, "
        f"loglik {report.final_loglik:.6f} after {report.iterations} iterations"
    )
    return EXIT_OK


def cmd_loglik(args):
    params = model.load(args.model)
    seqs = _load_sequences(args.input, args.truncate)
    rows = [
        (s.user, s.session, s.n, model.sequence_loglik(params, s.encode(params.alphabet)))
        for s in seqs
    ]
    _write_csv(args.output, ("user", "session", "n", "loglik"), rows)
    return EXIT_OK


def cmd_states(args):
    params = model.load(args.model)
    seqs = _load_sequences(args.input, args.truncate)
    rows = []
    for s in seqs:
        decoded = model.predict_states(params, s.encode(params.alphabet))
        rows.extend(
            (s.user, s.session, k, s.labels[k], int(z)) for k, z in enumerate(decoded)
        )
    _write_csv(args.output, ("user", "session", "step", "event", "state"), rows)
    return EXIT_OK


def cmd_sample(args):
    params = model.load(args.model)
    if params.n_features < 2:
        raise ValueError("sampling to CSV requires interval and duration features")
    rng = master_rng(args.seed)
    events = []
    for i in range(args.samples):
        seq, _ = model.sample(params, args.length, rng)
        labeled = dataset.LabeledSequence(
            user="model",
            session=f"s{i:04d}",
            labels=params.alphabet.decode(seq.events),
            features=seq.features,
        )
        events.extend(dataset.synthesize_events(labeled))
    dataset.save_csv(events, args.output)
    return EXIT_OK


def cmd_gof(args):
    seqs = _load_sequences(args.input, args.truncate)
    if args.user is not None:
        seqs = [s for s in seqs if s.user == args.user]
    if args.session is not None:
        seqs = [s for s in seqs if s.session == args.session]
    if not seqs:
        raise ValueError("no sequence matches the requested user/session")
    seq = seqs[0]
    alphabet = EventAlphabet.from_labels(seq.labels)
    result = gof.monte_carlo_gof(
        seq.encode(alphabet),
        alphabet,
        _fit_config(args),
        args.surrogates,
        master_rng(args.seed),
        resample_events=not args.reuse_events,
    )
    doc = {
        "A": result.area,
        "S": result.n_surrogates,
        "p_value": result.p_value,
        "A_surrogates": result.surrogate_areas.tolist(),
        "user": seq.user,
        "session": seq.session,
    }
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"gof: A={result.area:.6g} p={result.p_value:.4g} (S={result.n_surrogates})")
    return EXIT_OK


def _password_split(samples, train_lo=150, train_hi=200):
    """Train on per-user samples [train_lo, train_hi) in session order, test on the rest."""
    train, test = {}, {}
    for user, seqs in samples.items():
        train[user] = seqs[train_lo:train_hi]
        test[user] = seqs[train_hi:]
        if not train[user] or not test[user]:
            raise ValueError(f"user {user!r} lacks samples for the password split")
    return train, test


def cmd_benchmark(args):
    import os

    seqs = _load_sequences(args.input, args.truncate)
    samples = {}
    for s in seqs:
        samples.setdefault(s.user, []).append(s)

    events = dataset.load_csv(args.input)
    sessions = dataset.group_sessions(events)
    vectors = {}
    for (user, session), rows in sessions.items():
        if len(rows) < 2:
            continue
        vec = dataset.timing_vector(rows, max_keystrokes=args.truncate)
        vectors.setdefault(user, []).append(vec)
    lengths = {v.shape[0] for vs in vectors.values() for v in vs}
    detectors = list(biometric.SEQUENCE_DETECTORS)
    if len(lengths) == 1:
        detectors += list(biometric.VECTOR_DETECTORS)
    else:
        vectors = None

    report = biometric.run_benchmark(
        samples,
        config=_fit_config(args),
        window=args.window,
        vectors=vectors,
        detectors=tuple(detectors),
        folds=args.folds,
    )

    os.makedirs(args.outdir, exist_ok=True)
    summary = [
        (
            det.name,
            det.acc_mean,
            det.acc_ci,
            det.eer_mean,
            det.eer_ci,
            det.amrt if det.amrt is not None else "",
            det.amrt_std if det.amrt_std is not None else "",
        )
        for det in report.detectors.values()
    ]
    _write_csv(
        os.path.join(args.outdir, "summary.csv"),
        ("detector", "acc", "acc_ci95", "eer", "eer_ci95", "amrt", "amrt_std"),
        summary,
    )
    roc_rows = []
    for det in report.detectors.values():
        roc_rows.extend(
            (det.name, float(t), float(fa), float(fr))
            for t, fa, fr in zip(det.roc.thresholds, det.roc.far, det.roc.frr)
        )
    _write_csv(
        os.path.join(args.outdir, "roc.csv"),
        ("detector", "threshold", "far", "frr"),
        roc_rows,
    )
    amrt_rows = [
        (det.name, det.amrt, det.amrt_std)
        for det in report.detectors.values()
        if det.amrt is not None
    ]
    _write_csv(
        os.path.join(args.outdir, "amrt.csv"), ("detector", "amrt", "amrt_std"), amrt_rows
    )
    per_user = {
        det.name: det.per_user for det in report.detectors.values()
    }
    with open(os.path.join(args.outdir, "per_user.json"), "w", encoding="utf-8") as fh:
        json.dump(per_user, fh, sort_keys=True, indent=1)
        fh.write("\n")
    for det in report.detectors.values():
        print(
            f"{det.name}: ACC {det.acc_mean:.3f} ({det.acc_ci:.3f}) "
            f"EER {det.eer_mean:.3f} ({det.eer_ci:.3f})"
            + (f" AMRT {det.amrt:.2f}" if det.amrt is not None else "")
        )
    return EXIT_OK


def cmd_simulate(args):
    n_grid = tuple(int(x) for x in args.n_grid.split(","))
    report = simulation.run_scenario(
        args.scenario,
        n_grid=n_grid,
        replicates=args.replicates,
        rng=master_rng(args.seed),
    )
    rows = [
        (
            report.scenario,
            r["N"],
            r["group"],
            r["parameter"],
            r["residual"],
            r["stderr"],
            report.accuracy[r["N"]],
        )
        for r in report.rows
    ]
    _write_csv(
        args.output,
        ("scenario", "N", "group", "parameter", "mean_residual", "stderr", "accuracy"),
        rows,
    )
    for n in report.n_grid:
        print(
            f"scenario {report.scenario} N={n}: "
            f"mean |emission loc residual| = {report.mean_abs_residual(n, 'emission_loc'):.3f}, "
            f"state accuracy = {report.accuracy[n]:.3f}"
        )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pohmm",
        description="Event-type-conditioned hidden Markov models for keystroke biometrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate a model from a keystroke CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-out", default=None)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("loglik", help="score sequences under a model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--truncate", type=int, default=None)
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("states", help="decode most likely hidden states")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--truncate", type=int, default=None)
    p.set_defaults(func=cmd_states)

    p = sub.add_parser("sample", help="generate synthetic keystroke data from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--length", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gof", help="Monte Carlo goodness of fit for one sequence")
    p.add_argument("--input", required=True)
    p.add_argument("--user", default=None)
    p.add_argument("--session", default=None)
    p.add_argument("--surrogates", type=int, default=99)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reuse-events", action="store_true", help="surrogates reuse observed event types")
    p.add_argument("--output", required=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("benchmark", help="cross-fold identification/verification benchmark")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--window", type=int, default=biometric.DEFAULT_WINDOW)
    p.add_argument("--folds", type=int, default=None)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("simulate", help="parameter-recovery simulation scenarios")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--n-grid", default="128,512,2048,4096")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
