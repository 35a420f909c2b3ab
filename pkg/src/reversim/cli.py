"""``reversim`` command-line front end.

Subcommands::

    reversim photon     --mode nocount|onecount|invert --lambda-tau X --state FILE [--check FILE]
    reversim kerr       (--model FILE | --epsilon E | --alpha-abs A --kappa K) --dim D --state FILE
                        [--trials N --seed S] [--check-post] [--format json|csv]
    reversim revcheck   --model FILE [--threshold T]
    reversim reverse    --model FILE --outcome LABEL --state FILE [--truncate N] [--gamma G]
                        [--trials N] [--seed S]
    reversim experiment joint-prob|sharp-limit|recovery --seed S --out-dir DIR [--param KEY=VALUE ...]

Every command writes JSON to ``--out`` (``-`` for standard output, the
default).  Output is deterministic: sorted keys and floats at 17
significant digits.  Errors go to standard error as one JSON line
``{"error": ..., "exit_code": ..., "message": ...}``.

Exit codes: 0 success, 1 internal error, 2 validation error, 3 impossible
outcome, 4 irreversible outcome, 5 an experiment check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import ReversimError, ValidationError
from .formats import ParsedModel, dumps, load_model, load_state, state_document
from .kerr_qnd import KerrModel, discretized_family
from .measurement import apply_outcome, check_completeness, outcome_probabilities, sample_outcomes
from .operator_core import fidelity, max_abs
from .photon_counting import counting_pair, no_count_evolve, no_count_invert, one_count_apply
from .reversibility import DEFAULT_THRESHOLD, family_verdicts
from .reversing import (
    build_reversal,
    build_truncated_diagonal_reversal,
    build_truncated_reversal,
    truncated_source_operator,
    verify_reversal,
)

EXIT_CHECK_FAILED = 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _write(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_json(doc, out: str) -> None:
    _write(dumps(doc) + "\n", out)


def _captured(fn, *args, **kwargs):
    """Call ``fn`` and return ``(result, sorted unique warning messages)``."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = fn(*args, **kwargs)
    return result, sorted({f"{w.category.__name__}: {w.message}" for w in caught})


def _require_seed(args) -> int:
    if args.seed is None:
        raise ValidationError("--seed is required for randomized commands")
    return args.seed


def cmd_photon(args) -> int:
    rho = load_state(args.state)
    meta = {"command": "photon", "mode": args.mode}
    if args.mode == "onecount":
        out = one_count_apply(rho)
    else:
        if args.lambda_tau is None:
            raise ValidationError(f"--lambda-tau is required for mode {args.mode}")
        meta["lambda_tau"] = args.lambda_tau
        out = no_count_evolve(rho, args.lambda_tau) if args.mode == "nocount" else no_count_invert(rho, args.lambda_tau)
    meta["populations"] = out.populations()
    if args.check is not None:
        ref = load_state(args.check)
        if ref.dim != out.dim:
            raise ValidationError(f"check state dim {ref.dim} != result dim {out.dim}")
        meta["deviation"] = max_abs(out.matrix - ref.matrix)
        meta["fidelity_to_check"] = fidelity(out, ref)
    _emit_json(state_document(out, meta), args.out)
    return 0


def _kerr_model(args) -> KerrModel:
    if args.model is not None:
        parsed = load_model(args.model)
        if parsed.kind != "kerr":
            raise ValidationError(f"kerr needs a kerr model file, got kind {parsed.kind!r}")
        return parsed.kerr
    if args.dim is None:
        raise ValidationError("--dim is required without --model")
    if args.epsilon is not None:
        return KerrModel.from_epsilon(args.epsilon, args.dim, args.kappa or 1.0, args.margin_sigmas, args.spacing_fraction)
    if args.alpha_abs is None or args.kappa is None:
        raise ValidationError("give --model, --epsilon, or both --alpha-abs and --kappa")
    return KerrModel(args.alpha_abs, args.kappa, args.dim, margin_sigmas=args.margin_sigmas, spacing_fraction=args.spacing_fraction)


def cmd_kerr(args) -> int:
    model = _kerr_model(args)
    rho = load_state(args.state)
    if rho.dim != model.dim:
        raise ValidationError(f"state dim {rho.dim} != model dim {model.dim}")
    fam, notes = _captured(discretized_family, model)
    probs = outcome_probabilities(fam, rho)
    doc = {
        "command": "kerr",
        "epsilon": model.epsilon,
        "spacing": model.spacing,
        "dim": model.dim,
        "completeness_deviation": fam.metadata["completeness_deviation"],
        "grid": model.grid,
        "probabilities": probs,
        "warnings": notes,
    }
    counts = None
    if args.trials:
        seed = _require_seed(args)
        draws = sample_outcomes(fam, rho, args.trials, np.random.default_rng(seed))
        counts = np.bincount(draws, minlength=len(fam))
        doc.update(seed=seed, trials=args.trials, counts=counts)
        if args.check_post:
            seen = np.flatnonzero(counts)
            fids = [fidelity(apply_outcome(fam, rho, fam.labels[k]), rho) for k in seen]
            doc["post_state_min_fidelity"] = min(fids)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["nu [photons]", "probability [probability]"] + (["count [1]"] if counts is not None else []))
        for k, nu in enumerate(model.grid):
            row = [format(float(nu), ".17g"), format(float(probs[k]), ".17g")]
            w.writerow(row + ([int(counts[k])] if counts is not None else []))
        _write(buf.getvalue(), args.out)
    else:
        _emit_json(doc, args.out)
    return 0


def _family_with_notes(parsed: ParsedModel):
    return _captured(parsed.measurement_family)


def cmd_revcheck(args) -> int:
    parsed = load_model(args.model)
    fam, notes = _family_with_notes(parsed)
    verdicts = family_verdicts(fam, args.threshold)
    outcomes = []
    for label, v in zip(fam.labels, verdicts):
        entry = {"label": label, "verdict": v.to_dict()}
        if v.reversible:
            entry["success_probability"] = v.sigma_min**2
            entry["log_success_probability"] = 2.0 * v.log_sigma_min
        outcomes.append(entry)
    doc = {
        "command": "revcheck",
        "model_kind": parsed.kind,
        "family": fam.name,
        "threshold": args.threshold,
        "outcomes": outcomes,
        "family_reversible": all(v.reversible for v in verdicts),
        "completeness_deviation": check_completeness(fam).max_deviation,
        "warnings": notes,
    }
    _emit_json(doc, args.out)
    return 0


def _match_label(labels, raw: str):
    if raw in labels:
        return raw
    for conv in (int, float):
        try:
            value = conv(raw)
        except ValueError:
            continue
        if value in labels:
            return labels[labels.index(value)]
    raise ValidationError(f"unknown outcome label {raw!r}")


def _parse_gamma(raw):
    if raw is None or raw == "optimal":
        return "optimal"
    try:
        return complex(raw.replace(" ", ""))
    except ValueError:
        raise ValidationError(f"--gamma must be 'optimal' or a number, got {raw!r}") from None


def _reversal_source(parsed: ParsedModel, args):
    """Return ``(operator, plan, label, notes)`` for the requested outcome."""
    gamma = _parse_gamma(args.gamma)
    if parsed.kind == "kerr":
        model = parsed.kerr
        try:
            nu = float(args.outcome)
        except ValueError:
            raise ValidationError(f"kerr outcome must be a real estimate nu, got {args.outcome!r}") from None
        weight = model.spacing
        a, notes = _captured(truncated_source_operator, model, nu, weight)
        if args.truncate is not None:
            plan = build_truncated_reversal(model, nu, args.truncate, gamma, weight)
        else:
            plan = build_reversal(a, gamma)
        return a, plan, nu, notes
    if parsed.kind == "nocount":
        fam = counting_pair(parsed.lambda_tau, parsed.dim)
    else:
        fam = parsed.family
    label = _match_label(fam.labels, args.outcome)
    a = np.array(fam.operator(label))
    if args.truncate is not None:
        plan = build_truncated_diagonal_reversal(a, args.truncate, gamma)
    else:
        plan = build_reversal(a, gamma)
    return a, plan, label, []


def cmd_reverse(args) -> int:
    parsed = load_model(args.model)
    rho = load_state(args.state)
    a, plan, label, notes = _reversal_source(parsed, args)
    check = verify_reversal(rho, a, plan)
    doc = {
        "command": "reverse",
        "model_kind": parsed.kind,
        "outcome": label,
        "plan": plan.to_dict(),
        "check": check.to_dict(),
        "warnings": notes,
    }
    if args.trials:
        seed = _require_seed(args)
        rng = np.random.default_rng(seed)
        first = rng.random(args.trials) < check.outcome_probability
        hits = int(np.count_nonzero(first))
        successes = int(np.count_nonzero(rng.random(hits) < check.success_probability))
        p = check.joint_probability
        doc["sampling"] = {
            "seed": seed,
            "trials": args.trials,
            "joint_frequency": successes / args.trials,
            "joint_probability": p,
            "z_score": ex.binomial_z(successes, args.trials, p),
        }
    _emit_json(doc, args.out)
    return 0


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    if "," in raw:
        return [_parse_value(x) for x in raw.split(",")]
    return raw


def _floats(x, key):
    vals = x if isinstance(x, list) else [x]
    try:
        return tuple(float(v) for v in vals)
    except (TypeError, ValueError):
        raise ValidationError(f"parameter {key} must be a number list") from None


_EXPERIMENT_PARAMS = {
    "joint-prob": {"theta", "label", "n_states", "n_trials"},
    "sharp-limit": {"epsilons", "n", "dim", "margin_sigmas", "spacing_fraction", "n_trials"},
    "recovery": {"state", "dim", "lambda_tau", "truncate_at", "gamma", "n_trials", "sweep_lambda_taus", "sweep_dims"},
}


def _experiment_params(name: str, pairs) -> dict:
    params = {}
    for item in pairs or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValidationError(f"--param expects KEY=VALUE, got {item!r}")
        if key not in _EXPERIMENT_PARAMS[name]:
            raise ValidationError(f"unknown parameter {key!r} for {name}; known: {sorted(_EXPERIMENT_PARAMS[name])}")
        params[key] = _parse_value(raw)
    return params


def _int(x, key):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ValidationError(f"parameter {key} must be an integer, got {x!r}")
    return x


def run_named_experiment(name: str, params: dict, seed: int) -> ex.ExperimentReport:
    p = dict(params)
    if name == "joint-prob":
        fam = ex.spin_family(float(p.pop("theta", math.pi / 6)))
        label = _int(p.pop("label", 0), "label")
        kwargs = {k: _int(v, k) for k, v in p.items()}
        return ex.run_joint_prob_experiment(fam, label, seed=seed, **kwargs)
    if name == "sharp-limit":
        kwargs = {}
        if "epsilons" in p:
            kwargs["epsilons"] = _floats(p.pop("epsilons"), "epsilons")
        for k in ("n", "dim", "n_trials"):
            if k in p:
                kwargs[k] = _int(p.pop(k), k)
        for k in ("margin_sigmas", "spacing_fraction"):
            if k in p:
                kwargs[k] = _floats(p.pop(k), k)[0]
        return ex.run_sharp_limit_sweep(seed=seed, **kwargs)
    kwargs = {}
    if "state" in p and "dim" in p:
        raise ValidationError("give either state or dim, not both")
    if "state" in p:
        kwargs["rho"] = load_state(str(p.pop("state")))
    elif "dim" in p:
        kwargs["rho"] = ex.uniform_superposition(_int(p.pop("dim"), "dim"))
    if "lambda_tau" in p:
        kwargs["lambda_tau"] = _floats(p.pop("lambda_tau"), "lambda_tau")[0]
    if "truncate_at" in p:
        kwargs["truncate_at"] = _int(p.pop("truncate_at"), "truncate_at")
    if "gamma" in p:
        kwargs["gamma_policy"] = _parse_gamma(str(p.pop("gamma")))
    if "n_trials" in p:
        kwargs["n_trials"] = _int(p.pop("n_trials"), "n_trials")
    if "sweep_lambda_taus" in p:
        kwargs["sweep_lambda_taus"] = _floats(p.pop("sweep_lambda_taus"), "sweep_lambda_taus")
    if "sweep_dims" in p:
        dims = p.pop("sweep_dims")
        kwargs["sweep_dims"] = tuple(_int(d, "sweep_dims") for d in (dims if isinstance(dims, list) else [dims]))
    return ex.run_recovery_experiment(seed=seed, **kwargs)


def cmd_experiment(args) -> int:
    seed = _require_seed(args)
    params = _experiment_params(args.name, args.param)
    report = run_named_experiment(args.name, params, seed)
    paths = report.write(args.out_dir)
    for c in report.summary:
        print(c.line())
    print(f"wrote {len(paths)} files to {args.out_dir}")
    return 0 if report.passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reversim", description="Logically reversible measurement simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("photon", help="no-count, one-count and inverse no-count evolution")
    p.add_argument("--mode", required=True, choices=["nocount", "onecount", "invert"])
    p.add_argument("--lambda-tau", type=float)
    p.add_argument("--state", required=True, help="state file ('-' for stdin)")
    p.add_argument("--check", help="state file to compare the result against")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_photon)

    p = sub.add_parser("kerr", help="Kerr QND outcome distribution")
    p.add_argument("--model", help="kerr model file")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha-abs", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--margin-sigmas", type=float, default=6.0)
    p.add_argument("--spacing-fraction", type=float, default=0.25)
    p.add_argument("--state", required=True)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--check-post", action="store_true", help="report fidelity of sampled post-states to the input")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_kerr)

    p = sub.add_parser("revcheck", help="logical reversibility of every outcome of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_revcheck)

    p = sub.add_parser("reverse", help="build and verify a reversing measurement")
    p.add_argument("--model", required=True)
    p.add_argument("--outcome", required=True, help="outcome label (the estimate nu for kerr models)")
    p.add_argument("--state", required=True)
    p.add_argument("--truncate", type=int, help="Fock cutoff N for an approximate (truncated) reversal")
    p.add_argument("--gamma", help="'optimal' (default) or a complex scale such as 0.2 or 0.1+0.1j")
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_reverse)

    p = sub.add_parser("experiment", help="run a scripted experiment and write JSON + CSV")
    p.add_argument("name", choices=sorted(_EXPERIMENT_PARAMS))
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def _report_error(exc: BaseException, code: int) -> int:
    line = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    sys.stderr.write(json.dumps(line, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ReversimError as exc:
        return _report_error(exc, exc.exit_code)
    except Exception as exc:  # noqa: BLE001
        return _report_error(exc, 1)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
