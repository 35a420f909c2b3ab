"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (bypassing pytest's output
capture) and then asserts.  The file also runs standalone:
``python tests/test_acceptance.py``.
"""

import contextlib
import io
import json
import math
import time
import warnings

import numpy as np
import pytest

from reversim.cli import main as cli_main
from reversim.errors import ImpossibleOutcomeError, NormViolationError, ReversibilityMarginalWarning
from reversim.experiments import run_joint_prob_experiment, run_recovery_experiment, spin_family
from reversim.formats import dumps, family_document
from reversim.kerr_qnd import KerrModel, discretized_family, kerr_operator, rounding_probability
from reversim.measurement import check_completeness
from reversim.operator_core import DensityOperator, fock_density, fock_operators, random_density
from reversim.photon_counting import no_count_evolve, no_count_invert, no_count_operator, one_count_apply
from reversim.reversibility import boundedness_probe, family_verdicts, is_logically_reversible
from reversim.reversing import (
    build_reversal,
    build_truncated_reversal,
    joint_success_probability,
    truncated_source_operator,
    verify_reversal,
)

SEED = 20240611


def gaussian_c(n, nu, eps):
    return math.exp(-((n - nu) ** 2) / (2 * eps * eps)) / math.sqrt(2 * math.pi * eps * eps)


@pytest.fixture
def announce(capsys):
    def _announce(number, title, passed, detail, elapsed, budget):
        in_time = elapsed < budget
        ok = bool(passed and in_time)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: {detail} [{elapsed:.2f}s / {budget:g}s]"
        with capsys.disabled():
            print("\n" + line)
        assert passed, line
        assert in_time, line

    return _announce


def test_criterion_01_no_count_round_trip(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng([SEED, 1])
    worst = 0.0
    for dim in (2, 8, 32):
        for lt in (0.1, 1.0, 3.0):
            for _ in range(100):
                rho = random_density(dim, rng)
                back = no_count_invert(no_count_evolve(rho, lt), lt)
                worst = max(worst, float(np.max(np.abs(back.matrix - rho.matrix))))
    announce(1, "no-count round trip", worst < 1e-10, f"max deviation {worst:.3e} (< 1e-10)", time.perf_counter() - t0, 5)


def test_criterion_02_one_count_irreversible(announce):
    t0 = time.perf_counter()
    sigmas = []
    verdicts = []
    for dim in range(2, 33):
        a, _, _ = fock_operators(dim)
        v = is_logically_reversible(a)
        sigmas.append(v.sigma_min)
        verdicts.append(v.reversible)
    try:
        one_count_apply(fock_density(0, 4))
        vacuum_raises = False
    except ImpossibleOutcomeError:
        vacuum_raises = True
    passed = all(s == 0.0 for s in sigmas) and not any(verdicts) and vacuum_raises
    detail = f"sigma_min exactly 0 for dims 2..32: {all(s == 0.0 for s in sigmas)}; vacuum raises: {vacuum_raises}"
    announce(2, "one-count irreversible", passed, detail, time.perf_counter() - t0, 1)


def test_criterion_03_kerr_reversible(announce):
    t0 = time.perf_counter()
    total = resolvable = 0
    all_reversible = True
    worst_completeness = 0.0
    svd_agrees = True
    for eps in (0.25, 0.5, 1.0):
        for dim in (4, 8, 16):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ReversibilityMarginalWarning)
                fam = discretized_family(KerrModel.from_epsilon(eps, dim))
            worst_completeness = max(worst_completeness, check_completeness(fam).max_deviation)
            for op, v in zip(fam.operators, family_verdicts(fam)):
                total += 1
                all_reversible &= v.reversible
                if v.sigma_min > 1e-10:
                    resolvable += 1
                    svd_agrees &= is_logically_reversible(op).reversible
    passed = all_reversible and svd_agrees and worst_completeness < 1e-6
    detail = (
        f"{total} outcomes reversible by exact nonvanishing test: {all_reversible} "
        f"({resolvable} also above 1e-10 by SVD: {svd_agrees}); completeness {worst_completeness:.2e} (< 1e-6)"
    )
    announce(3, "Kerr reversibility", passed, detail, time.perf_counter() - t0, 5)


def test_criterion_04_sharp_limit(announce):
    t0 = time.perf_counter()
    probs, devs = [], []
    for eps in (0.5, 0.25, 0.1):
        p = rounding_probability(KerrModel.from_epsilon(eps, 5), 2)
        probs.append(p)
        devs.append(abs(p - math.erf(1 / (2 * math.sqrt(2) * eps))))
    monotone = all(b > a for a, b in zip(probs, probs[1:]))
    passed = max(devs) <= 1e-4 and monotone
    detail = f"max |P - erf| {max(devs):.2e} (<= 1e-4); increasing as eps decreases: {monotone}"
    announce(4, "sharp limit", passed, detail, time.perf_counter() - t0, 2)


def test_criterion_05_recovery_identity(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng([SEED, 5])
    kerr = KerrModel.from_epsilon(0.5, 8)
    operators = {
        "spin pi/6": np.diag([math.cos(math.pi / 6), math.sin(math.pi / 6)]),
        "spin 0.3": np.diag([math.cos(0.3), math.sin(0.3)]),
        "no-count lt=1 dim=6": no_count_operator(1.0, 6),
        "kerr eps=0.5 nu=3 dim=8": truncated_source_operator(kerr, 3.0, kerr.spacing),
    }
    worst = {}
    for name, a in operators.items():
        plan = build_reversal(a)
        worst[name] = min(verify_reversal(random_density(a.shape[0], rng), a, plan).fidelity for _ in range(100))
    low = min(worst.values())
    detail = ", ".join(f"{k}: 1-F={1 - v:.1e}" for k, v in worst.items())
    announce(5, "recovery identity", low >= 1 - 1e-9, f"min F >= 1-1e-9 ({detail})", time.perf_counter() - t0, 10)


def test_criterion_06_state_independence(announce):
    t0 = time.perf_counter()
    family = spin_family(math.pi / 6)
    a = family.operator(0)
    plan = build_reversal(a)
    rng = np.random.default_rng([SEED, 6])
    dev = max(abs(joint_success_probability(random_density(2, rng), a, plan)[1] - plan.success_probability) for _ in range(200))
    report = run_joint_prob_experiment(family, 0, plan, n_states=200, n_trials=100_000, seed=SEED)
    dev = max(dev, max(report.table("states").column("joint_analytic_deviation")))
    max_z = report.check("joint_frequency_within_band").measured
    passed = dev < 1e-10 and max_z <= 4.0
    detail = f"analytic deviation {dev:.1e} over 400 states (< 1e-10); Monte Carlo max |z| {max_z:.2f} over 200 states (<= 4)"
    announce(6, "state independence", passed, detail, time.perf_counter() - t0, 30)


def test_criterion_07_optimal_success(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng([SEED, 7])
    accepted = rejected = 0
    worst = 0.0
    for _ in range(50):
        d = rng.uniform(0.05, 1.0, size=int(rng.integers(2, 9))) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=1))
        a = np.diag(d)
        smin = float(np.min(np.abs(d)))  # diagonal oracle
        plan = build_reversal(a, smin)
        accepted += 1
        worst = max(worst, abs(plan.success_probability - smin**2))
        try:
            build_reversal(a, smin * (1 + 1e-6))
        except NormViolationError:
            rejected += 1
    passed = accepted == 50 and rejected == 50 and worst <= 1e-10
    detail = f"accepted {accepted}/50 at sigma_min, rejected {rejected}/50 above; |p - sigma_min^2| max {worst:.1e}"
    announce(7, "optimal success probability", passed, detail, time.perf_counter() - t0, 2)


def test_criterion_08_truncated_reversal(announce):
    t0 = time.perf_counter()
    model = KerrModel.from_epsilon(0.5, 8)
    plan = build_truncated_reversal(model, 2.0, 4)
    a = truncated_source_operator(model, 2.0)
    gamma_oracle = min(math.sqrt(gaussian_c(n, 2.0, 0.5)) for n in range(5))
    gamma_err = abs(abs(plan.c) - gamma_oracle)
    r0 = plan.r_success
    margin = float(np.min(np.linalg.eigvalsh(np.eye(8) - r0.conj().T @ r0)))
    rng = np.random.default_rng([SEED, 8])
    fids = []
    for _ in range(100):
        rho = DensityOperator(np.pad(random_density(5, rng).matrix, ((0, 3), (0, 3))))
        fids.append(verify_reversal(rho, a, plan).fidelity)
    passed = min(fids) >= 1 - 1e-9 and gamma_err <= 1e-12 and margin >= -1e-12
    detail = f"min F {min(fids):.12f}; ||gamma| - min sqrt(C_n)| {gamma_err:.1e}; min eig(1 - R0^dag R0) {margin:.2e}"
    announce(8, "truncated reversal", passed, detail, time.perf_counter() - t0, 2)


def test_criterion_09_unboundedness_probe(announce):
    t0 = time.perf_counter()
    dims = [8, 16, 32]

    def kerr(d):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ReversibilityMarginalWarning)
            return kerr_operator(KerrModel.from_epsilon(0.5, d), 0.0)

    labels = {
        "kerr": boundedness_probe(kerr, dims).classification,
        "no-count": boundedness_probe(lambda d: no_count_operator(1.0, d), dims).classification,
        "identity": boundedness_probe(np.eye, dims).classification,
    }
    passed = labels == {"kerr": "unbounded", "no-count": "unbounded", "identity": "bounded"}
    announce(9, "unboundedness probe", passed, str(labels), time.perf_counter() - t0, 2)


def test_criterion_10_recovery_experiment(announce):
    t0 = time.perf_counter()
    report = run_recovery_experiment(lambda_tau=2 * math.log(2), seed=SEED)
    main = report.table("main")
    success = main.column("success_probability")[0]
    fid = main.column("recovered_fidelity")[0]
    sweep = report.table("sweep")
    rows = list(zip(sweep.column("dim"), sweep.column("lambda_tau"), sweep.column("success_probability")))
    in_lt = all(
        all(b < a for a, b in zip(s, s[1:]))
        for s in ([p for _, _, p in sorted(r for r in rows if r[0] == d)] for d in {r[0] for r in rows})
    )
    in_dim = all(
        all(b < a for a, b in zip(s, s[1:]))
        for s in ([p for _, _, p in sorted((r for r in rows if r[1] == lt), key=lambda r: r[0])] for lt in {r[1] for r in rows})
    )
    passed = abs(success - 0.25) <= 1e-12 and fid >= 1 - 1e-10 and in_lt and in_dim
    detail = (
        f"success {success:.15f} (0.25 +- 1e-12); 1-F {1 - fid:.1e} (<= 1e-10); "
        f"strictly decreasing in lambda_tau: {in_lt}, in dim: {in_dim}"
    )
    announce(10, "recovery experiment", passed, detail, time.perf_counter() - t0, 5)


def test_criterion_11_cli_determinism(announce, tmp_path):
    t0 = time.perf_counter()
    s = 1 / math.sqrt(2)
    (tmp_path / "plus.json").write_text(
        dumps({"format_version": 1, "kind": "pure", "dim": 2, "payload": {"amplitudes": [[s, 0], [s, 0]]}})
    )
    (tmp_path / "fock.json").write_text(dumps({"format_version": 1, "kind": "fock", "dim": 8, "payload": {"n": 2}}))
    (tmp_path / "spin.json").write_text(dumps(family_document(spin_family(math.pi / 6))))
    (tmp_path / "kerr.json").write_text(dumps({"format_version": 1, "kind": "kerr", "payload": {"epsilon": 0.5, "dim": 8}}))
    p = str(tmp_path)
    commands = [
        ["photon", "--mode", "nocount", "--lambda-tau", "1.3862943611198906", "--state", f"{p}/plus.json"],
        ["kerr", "--model", f"{p}/kerr.json", "--state", f"{p}/fock.json", "--trials", "5000", "--seed", "3"],
        ["revcheck", "--model", f"{p}/kerr.json"],
        ["reverse", "--model", f"{p}/spin.json", "--outcome", "0", "--state", f"{p}/plus.json", "--trials", "100000", "--seed", "5"],
        ["reverse", "--model", f"{p}/kerr.json", "--outcome", "2", "--truncate", "4", "--state", f"{p}/fock.json"],
    ]
    identical = []
    for i, argv in enumerate(commands):
        outs = []
        for rep in range(2):
            target = tmp_path / f"out{i}_{rep}.json"
            assert cli_main(argv + ["--out", str(target)]) == 0
            outs.append(target.read_bytes())
        identical.append(outs[0] == outs[1])
    for name in ("joint-prob", "sharp-limit", "recovery"):
        runs = []
        for rep in range(2):
            out_dir = tmp_path / f"{name}_{rep}"
            with contextlib.redirect_stdout(io.StringIO()):
                assert cli_main(["experiment", name, "--seed", "11", "--out-dir", str(out_dir)]) == 0
            runs.append({f.name: f.read_bytes() for f in sorted(out_dir.iterdir())})
        identical.append(runs[0] == runs[1])
        json.loads(runs[0][f"{name}.json"])
    detail = f"{sum(identical)}/{len(identical)} invocations byte-identical on repeat"
    announce(11, "CLI determinism", all(identical), detail, time.perf_counter() - t0, 5)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
